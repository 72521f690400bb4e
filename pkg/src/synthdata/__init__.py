# Synthetic scenes, vocabulary and manifest I/O
