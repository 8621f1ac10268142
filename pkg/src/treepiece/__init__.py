"""Subtree tokenization of semantic-parse skeletons."""
from .errors import *  # noqa: F401,F403
from .io import Corpus, Record, load_corpus, load_vocab, read_corpus, read_vocab, save_vocab, write_vocab
from .lattice import (
    SubtreeLattice,
    TokenizationResult,
    brute_force_tokenize,
    enumerate_subtrees,
    ffbs_tokenize,
    viterbi_tokenize,
)
from .trainer import (
    EmTrace,
    StopReason,
    TrainConfig,
    em_train,
    em_train_sampled,
    expand_vocab,
    generate_vocabulary,
    init_vocab,
    train,
)
from .tree import (
    PLACEHOLDER,
    Kind,
    Label,
    Leaf,
    Node,
    attach_leaves,
    extract_leaves,
    extract_skeleton,
    parse_top,
    parse_unit,
    serialize_top,
)
from .units import (
    FlatTree,
    Partition,
    assemble,
    canonicalize,
    decorate,
    merge_pair,
    serialize_placeholder_nest,
)
from .vocab import Phase, Vocabulary

__version__ = "0.1.0"
