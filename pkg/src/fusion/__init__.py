# Image encoder and text-image early fusion
