"""Exception hierarchy. Every error carries a stable code used by the CLI."""


class RobustTCError(Exception):
    code = "E_GENERIC"


class BadMagic(RobustTCError):
    code = "E_BAD_MAGIC"


class UnsupportedLinkType(RobustTCError):
    code = "E_LINKTYPE"


class TruncatedHeader(RobustTCError):
    code = "E_TRUNCATED"


class UnlabeledFlow(RobustTCError):
    code = "E_UNLABELED"


class EmptyFlow(RobustTCError):
    code = "E_EMPTY_FLOW"


class ClassTooSmall(RobustTCError):
    code = "E_CLASS_SMALL"


class VersionMismatch(RobustTCError):
    code = "E_VERSION"


class ChecksumMismatch(RobustTCError):
    code = "E_CHECKSUM"


class ShapeMismatch(RobustTCError):
    code = "E_SHAPE"


class InvalidSpec(RobustTCError):
    code = "E_INVALID_SPEC"

    def __init__(self, message, layer_index=None):
        super().__init__(message)
        self.layer_index = layer_index


class EmptySplit(RobustTCError):
    code = "E_EMPTY_SPLIT"


class MutationStarvation(RobustTCError):
    code = "E_STARVATION"


class InfeasibleSeed(RobustTCError):
    code = "E_INFEASIBLE_SEED"


class GridMismatch(RobustTCError):
    code = "E_GRID"


class UnknownPreset(RobustTCError):
    code = "E_PRESET"
