"""Loop-group construction of constant mean curvature tori and cylinders."""

__version__ = "0.1.0"
