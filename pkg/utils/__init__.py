# utils module init
from .helpers import *
