# Hierarchical open-vocabulary segmentation package
