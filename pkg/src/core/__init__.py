# Geometry, mask and error primitives
