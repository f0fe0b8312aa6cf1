from .errors import *
from .units import *
from .results import *
