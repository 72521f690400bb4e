# Open-vocabulary classification and part hierarchy
