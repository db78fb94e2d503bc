"""Evaluation toolkit for uncertainty-aware lesion segmentation.

Volumes are numpy arrays of shape (nz, ny, nx); spacing is (sx, sy, sz) in mm.
"""

from ._seguq import *  # noqa: F401,F403
from ._seguq import __version__, SeguqError  # noqa: F401
