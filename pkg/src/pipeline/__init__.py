# Training, inference, evaluation and ablation runs
