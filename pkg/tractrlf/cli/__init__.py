# Command-line stages, one module per stage group
