# Minimal reverse-mode autodiff over numpy (float64)
