# Voxel grids, masks, phantoms and their file formats
