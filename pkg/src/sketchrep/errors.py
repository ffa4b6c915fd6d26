"""Exception types shared across the package.

Every operation that can reject its input raises one of these instead of a
bare ValueError, so callers (and the CLI exit-code mapping) can branch on
type.
"""


class SketchRepError(Exception):
    """Base class for all package-specific errors."""


# --- stroke file parsing ---

class MalformedRecord(SketchRepError):
    def __init__(self, line_no, detail=""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: malformed record{': ' + detail if detail else ''}")


class MismatchedArrays(SketchRepError):
    def __init__(self, line_no):
        self.line_no = line_no
        super().__init__(f"line {line_no}: stroke x/y arrays differ in length")


class EmptyDrawing(SketchRepError):
    def __init__(self, line_no=None):
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}drawing contains no points")


# --- synthetic data / splits ---

class TooFewClasses(SketchRepError):
    pass


class QuotaExceedsPerClass(SketchRepError):
    pass


# --- entropy filtering ---

class MixedClasses(SketchRepError):
    pass


class TooFewSamples(SketchRepError):
    pass


class ClassMismatch(SketchRepError):
    pass


# --- autodiff / model topology ---

class ShapeMismatch(SketchRepError):
    def __init__(self, op_name, expected, got):
        self.op_name = op_name
        self.expected = expected
        self.got = got
        super().__init__(f"{op_name}: expected shape {expected}, got {got}")


class NonScalarOutput(SketchRepError):
    pass


class EmptySequence(SketchRepError):
    pass


class MissingGrads(SketchRepError):
    pass


class TopologyMismatch(SketchRepError):
    pass


class DimensionMismatch(SketchRepError):
    pass


# --- losses ---

class EmptyBatch(SketchRepError):
    pass


class LabelOutOfRange(SketchRepError):
    pass


class EmptyClassAfterGating(SketchRepError):
    def __init__(self, class_id):
        self.class_id = class_id
        super().__init__(f"entropy band excluded every sample of class {class_id}")


class MissingCenter(SketchRepError):
    def __init__(self, class_id):
        self.class_id = class_id
        super().__init__(f"no center for class {class_id}")


class NonBinaryCode(SketchRepError):
    pass


class OutOfRangeFeature(SketchRepError):
    pass


# --- hashing / retrieval ---

class LengthMismatch(SketchRepError):
    pass


class EmptyStore(SketchRepError):
    pass


# --- zero-shot ---

class EmptyClass(SketchRepError):
    def __init__(self, class_id):
        self.class_id = class_id
        super().__init__(f"class {class_id} has no auxiliary features")


class MissingPrototype(SketchRepError):
    def __init__(self, class_id):
        self.class_id = class_id
        super().__init__(f"no prototype for class {class_id}")


class SplitOverlap(SketchRepError):
    pass


class EmptyCandidateSet(SketchRepError):
    pass


# --- evaluation ---

class NoRelevantItems(SketchRepError):
    pass


class SingleClass(SketchRepError):
    pass


# --- CLI ---

class ConfigError(SketchRepError):
    pass


class MissingInput(SketchRepError):
    pass


class StageFailure(SketchRepError):
    def __init__(self, stage, inner):
        self.stage = stage
        self.inner = inner
        super().__init__(f"stage '{stage}' failed: {inner}")
