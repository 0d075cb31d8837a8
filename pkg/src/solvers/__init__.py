"""Radial finite elements, eigensolvers, the perturbed problem and shooting."""

from .amp import *
from .eigen import *
from .fem import *
from .shooting import *
