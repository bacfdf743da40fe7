# Streamline cleaning and voxel overlap metrics
