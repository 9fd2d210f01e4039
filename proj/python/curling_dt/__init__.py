"""Python bindings for the curling decision-tree toolkit."""

from ._core import (
    ConfigError,
    TreeParseError,
    builtin_tree,
    builtin_tree_names,
    evaluate,
    gae,
    observe,
    play,
    score_game,
    semantically_equal,
    train,
    validate_tree,
)

__all__ = [
    "ConfigError",
    "TreeParseError",
    "builtin_tree",
    "builtin_tree_names",
    "evaluate",
    "gae",
    "observe",
    "play",
    "score_game",
    "semantically_equal",
    "train",
    "validate_tree",
]
