from ._agbseq import *  # noqa: F401,F403
