"""Exception types raised across graphlaunder."""


class GraphLaunderError(Exception):
    """Base class; the CLI prints ``error: <ClassName>: <message>`` for these."""


class DanglingEdge(GraphLaunderError):
    def __init__(self, tx_id, endpoint=None):
        self.tx_id = tx_id
        super().__init__(f"transaction {tx_id} references unknown account {endpoint}")


class DuplicateNode(GraphLaunderError):
    def __init__(self, node_id):
        self.node_id = node_id
        super().__init__(f"duplicate node id {node_id}")


class UnresolvedAlert(GraphLaunderError):
    pass


class EmptyWindow(GraphLaunderError, UserWarning):
    pass


class MissingColumn(GraphLaunderError):
    def __init__(self, name, path=None):
        self.name = name
        where = f" in {path}" if path else ""
        super().__init__(f"missing column {name!r}{where}")


class MalformedRow(GraphLaunderError):
    def __init__(self, line, reason=""):
        self.line = line
        super().__init__(f"malformed row at line {line}: {reason}")


class FeatureLengthMismatch(GraphLaunderError):
    pass


class UnknownClassToken(GraphLaunderError):
    def __init__(self, line, token):
        self.line = line
        self.token = token
        super().__init__(f"unknown class token {token!r} at line {line}")


class InsufficientNodes(GraphLaunderError):
    pass


class EmptyCorpus(GraphLaunderError):
    pass


class DimensionMismatch(GraphLaunderError):
    pass


class MissingFeatures(GraphLaunderError):
    pass


class InsufficientHistory(GraphLaunderError):
    pass


class EmptyDataset(GraphLaunderError):
    pass


class EmptyMask(GraphLaunderError):
    pass


class SingleClassMask(GraphLaunderError):
    pass


class MissingBaseVector(GraphLaunderError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"no base vector for neighbor {node!r}")


class TooFewSamples(GraphLaunderError):
    pass


class EmptyEvaluation(GraphLaunderError):
    pass


class ConfigError(GraphLaunderError):
    pass


class SingleClassLabels(GraphLaunderError, UserWarning):
    """Only one class present: ranking metrics are undefined."""
