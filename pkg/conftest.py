import os
import sys

# Absolute imports (src..., universe...) resolve against the repository root
ROOT = os.path.dirname(os.path.abspath(__file__))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)
