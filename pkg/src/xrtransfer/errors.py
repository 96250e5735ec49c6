"""Exception hierarchy. Every error raised by the package derives from XRError."""


class XRError(ValueError):
    pass


# core
class NegativeMass(XRError):
    pass


class NotNormalized(XRError):
    def __init__(self, total):
        self.total = float(total)
        super().__init__(f"mass sums to {self.total!r}, expected 1")


class ZeroMass(XRError):
    pass


# loss / model
class EmptyRows(XRError):
    pass


class LengthMismatch(XRError):
    pass


class EmptyBatch(XRError):
    pass


class EmptySequence(XRError):
    pass


class IndexOutOfVocab(XRError):
    pass


class DimensionMismatch(XRError):
    pass


class MalformedLine(XRError):
    def __init__(self, line_no, msg=""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {msg}" if msg else f"line {line_no}")


# train
class ShapeMismatch(XRError):
    pass


class EmptySets(XRError):
    pass


class EmptySetMember(XRError):
    pass


class EmptyData(XRError):
    pass


class EmptyCandidates(XRError):
    pass


# transfer
class EmptyPairs(XRError):
    pass


class MissingTableRow(XRError):
    pass


# frag
class Unbalanced(XRError):
    def __init__(self, pos):
        self.pos = pos
        super().__init__(f"unbalanced parentheses at offset {pos}")


class EmptyTree(XRError):
    pass


class MalformedNode(XRError):
    def __init__(self, pos, msg="malformed node"):
        self.pos = pos
        super().__init__(f"{msg} at offset {pos}")


class PivotNotInTree(XRError):
    pass


class MissingTree(XRError):
    pass


# cli / io
class MissingHeader(XRError):
    pass


class DuplicateId(XRError):
    def __init__(self, ident):
        self.id = ident
        super().__init__(f"duplicate id {ident!r}")


class BadSpan(XRError):
    def __init__(self, ident, msg=""):
        self.id = ident
        super().__init__(f"bad span in {ident!r} {msg}".rstrip())


class MalformedRecord(XRError):
    def __init__(self, line, msg=""):
        self.line = line
        super().__init__(f"malformed record on line {line}: {msg}")


class UnknownCommand(XRError):
    pass


class MissingFlag(XRError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing required flag --{name}")
