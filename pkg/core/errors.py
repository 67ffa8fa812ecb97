"""
Blockpost - Errors
===================
every failure the app knows about, each one with the exit code the cli uses
"""


class BlockpostError(Exception):
    """base for anything we raise on purpose"""

    exit_code = 1


class InputError(BlockpostError):
    """input file missing, unreadable, or not parseable"""

    exit_code = 2


class ConfigError(BlockpostError):
    """bad settings, bad sampler config, or lengths that dont line up"""

    exit_code = 3


class StateError(BlockpostError):
    """asked for a summary of nothing"""

    exit_code = 3


class DomainError(BlockpostError):
    """argument outside the range the math is defined on"""

    exit_code = 4


class CapacityError(BlockpostError):
    """problem too big for this machine or for exact enumeration"""

    exit_code = 5
