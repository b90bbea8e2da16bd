import pathlib
import sys

# Make the shared reference implementations importable from every test module.
sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))
