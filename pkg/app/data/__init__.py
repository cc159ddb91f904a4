# Copyright 2024
# Directory: ContourMARL/app/data/__init__.py

"""
Data package for default sweep grids, perturbation levels and the sample run configuration.
"""
