# Segmentation and classification losses
