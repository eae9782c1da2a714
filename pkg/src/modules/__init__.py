"""Net benefit value of information library (EVPI, EVSI, decision curves)."""
import sys
import os

sys.path.insert(0, os.path.abspath('.'))
