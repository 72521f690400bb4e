# Segmentation metrics and postprocessing
