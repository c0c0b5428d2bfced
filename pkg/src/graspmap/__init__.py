"""graspmap: spectral shape correspondence and grasp transfer for
deformed object instances, with rigid-ICP and nonrigid-CPD baselines."""

__version__ = "0.1.0"
