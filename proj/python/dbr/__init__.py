try:
    from ._dbr import *  # noqa: F401,F403  installed layout
except ImportError:  # build-tree layout: extension sits on PYTHONPATH
    from _dbr import *  # noqa: F401,F403
