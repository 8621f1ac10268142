"""Exception hierarchy for treepiece."""


class TreePieceError(Exception):
    """Base class for all treepiece errors."""


class TopParseError(TreePieceError, ValueError):
    pass


class UnbalancedBrackets(TopParseError):
    pass


class BadLabelPrefix(TopParseError):
    pass


class TextUnderIntent(TopParseError):
    pass


class EmptyInput(TopParseError):
    pass


class RootNotIntent(TopParseError):
    pass


class InvalidAttachPosition(TreePieceError, ValueError):
    pass


class DisconnectedComponent(TreePieceError, ValueError):
    pass


class AssemblyError(TreePieceError, ValueError):
    pass


class NoOpenPlaceholder(AssemblyError):
    pass


class UnfilledPlaceholders(AssemblyError):
    pass


class InvalidPartition(TreePieceError, ValueError):
    pass


class SkeletonTooLarge(TreePieceError, ValueError):
    pass


class OovSkeleton(TreePieceError):
    """No sequence of in-vocabulary units covers the skeleton."""


class EmptyCorpus(TreePieceError, ValueError):
    pass


class CorruptVocabFile(TreePieceError, ValueError):
    pass


class ParseErrorAtLine(TreePieceError, ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno
