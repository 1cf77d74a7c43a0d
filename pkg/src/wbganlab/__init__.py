"""wbganlab: GAN lab for whole-body-MRI-like image synthesis and evaluation."""

__version__ = "0.1.0"
