"""Reading and writing games as JSON or TOML files.

Layout::

    name = "G1"
    [[players]]
    states = 2          # optional, checked when given
    actions = 2         # optional, checked when given
    kernel = [[[0.9, 0.1], [0.1, 0.9]], [[0.1, 0.9], [0.9, 0.1]]]   # [s][a][s']
    [[players]]
    ...
    rewards = [...]     # one nested array per player, shape (S_1..S_n, A_1..A_n)

Kernel rows within 1e-9 of the simplex are renormalized; anything further
off is rejected with the offending ``(player, s, a)`` in the message.
"""

from __future__ import annotations

import json
import math
import os
import sys

import numpy as np

from .errors import ConfigError, StructuralError
from .game import BUILTIN_GAMES, JointGame, PlayerModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SIMPLEX_TOL = 1e-9


class GameFileError(ConfigError):
    """A game file could not be parsed; ``where`` names the offending field."""

    def __init__(self, message, where=None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


def read_structured(path):
    """Load a JSON or TOML document, chosen by file extension."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    ext = os.path.splitext(str(path))[1].lower()
    try:
        if ext == ".toml":
            return tomllib.loads(raw.decode("utf-8"))
        return json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: line {err.lineno}, column {err.colno}: {err.msg}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None


def _number(x, where):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise GameFileError(f"expected a number, got {x!r}", where)
    if not math.isfinite(x):
        raise GameFileError(f"non-finite value {x!r}", where)
    return float(x)


def _parse_kernel(entry, player):
    where = f"players[{player}]"
    if not isinstance(entry, dict) or "kernel" not in entry:
        raise GameFileError("missing 'kernel'", where)
    rows = entry["kernel"]
    if not isinstance(rows, list) or not rows:
        raise GameFileError("kernel must be a non-empty [s][a][s'] array", f"{where}.kernel")
    S = int(entry.get("states", len(rows)))
    A = int(entry.get("actions", len(rows[0]) if isinstance(rows[0], list) else 0))
    if S < 1 or A < 1:
        raise GameFileError(f"need at least one state and action, got {S} and {A}", where)
    if len(rows) != S:
        raise GameFileError(
            f"kernel lists {len(rows)} states, expected {S}"
            + (f"; missing state s={len(rows)}" if len(rows) < S else ""),
            f"{where}.kernel",
        )
    kernel = np.empty((S, A, S))
    for s, per_state in enumerate(rows):
        if not isinstance(per_state, list):
            raise GameFileError("expected a list of action rows", f"{where}.kernel[{s}]")
        if len(per_state) < A:
            raise GameFileError(
                f"missing kernel row for (player={player}, s={s}, a={len(per_state)})",
                f"{where}.kernel[{s}]",
            )
        if len(per_state) > A:
            raise GameFileError(
                f"state s={s} lists {len(per_state)} action rows, expected {A}",
                f"{where}.kernel[{s}]",
            )
        for a, row in enumerate(per_state):
            loc = f"{where}.kernel[{s}][{a}]"
            if not isinstance(row, list) or len(row) != S:
                raise GameFileError(
                    f"kernel row for (player={player}, s={s}, a={a}) must list {S} probabilities",
                    loc,
                )
            vals = np.array([_number(x, loc) for x in row])
            if vals.min() < -SIMPLEX_TOL or abs(vals.sum() - 1.0) > SIMPLEX_TOL:
                raise GameFileError(
                    f"kernel row for (player={player}, s={s}, a={a}) is not a probability "
                    f"vector (sum {vals.sum()!r}, min {vals.min()!r})",
                    loc,
                )
            vals = np.clip(vals, 0.0, None)
            kernel[s, a] = vals / vals.sum()
    return kernel


def game_from_dict(data, name=None):
    if not isinstance(data, dict):
        raise GameFileError("top level must be a table/object")
    players = data.get("players")
    if not isinstance(players, list) or not players:
        raise GameFileError("missing or empty 'players' list")
    kernels = [_parse_kernel(entry, i) for i, entry in enumerate(players)]
    rewards = data.get("rewards")
    if not isinstance(rewards, list) or len(rewards) != len(kernels):
        raise GameFileError(f"'rewards' must list one array per player ({len(kernels)})")
    shape = tuple(k.shape[0] for k in kernels) + tuple(k.shape[1] for k in kernels)
    tensors = []
    for i, r in enumerate(rewards):
        try:
            arr = np.array(r, dtype=float)
        except (TypeError, ValueError):
            raise GameFileError("ragged or non-numeric reward array", f"rewards[{i}]") from None
        if arr.shape != shape:
            raise GameFileError(f"shape {arr.shape}, expected {shape}", f"rewards[{i}]")
        tensors.append(arr)
    try:
        return JointGame(
            players=tuple(PlayerModel(i, k) for i, k in enumerate(kernels)),
            rewards=tuple(tensors),
            name=str(data.get("name", name or "")),
        )
    except StructuralError as err:
        raise GameFileError(str(err)) from None


def load_game(path):
    return game_from_dict(read_structured(path), name=os.path.splitext(os.path.basename(str(path)))[0])


def resolve_game(spec):
    """A built-in game name or a path to a game file."""
    if spec in BUILTIN_GAMES:
        return BUILTIN_GAMES[spec]()
    if not os.path.exists(str(spec)):
        raise ConfigError(
            f"game {spec!r} is neither a built-in ({', '.join(sorted(BUILTIN_GAMES))}) "
            "nor an existing file"
        )
    return load_game(spec)


def game_to_dict(game: JointGame):
    return {
        "name": game.name,
        "players": [
            {"states": p.num_states, "actions": p.num_actions, "kernel": p.kernel.tolist()}
            for p in game.players
        ],
        "rewards": [r.tolist() for r in game.rewards],
    }


def dump_game(game: JointGame, path):
    with open(path, "w") as fh:
        json.dump(game_to_dict(game), fh, indent=1)
