"""Co-creative level design engine: levels, the CNN partner, sessions, personas and ranking statistics."""

import json
import os

from ._core import (
    LEVEL_HEIGHT,
    TILE_COUNT,
    WINDOW_WIDTH,
    CnnAgent,
    Level,
    MoraiError,
    load_corpus,
    ranking_sample,
    spearman_rho,
    tile_id,
    tile_names,
    wilcoxon_rank_sum,
)
from . import _core

__all__ = [
    "LEVEL_HEIGHT", "TILE_COUNT", "WINDOW_WIDTH", "CnnAgent", "Level", "MoraiError", "Service",
    "adaptation_metrics", "error_code", "explain", "load_corpus", "ranking_sample", "simulate",
    "spearman_rho", "tile_id", "tile_names", "wilcoxon_rank_sum",
]


def error_code(err):
    """The code name carried by a MoraiError, e.g. "UnknownSession"."""
    return str(err).split(":", 1)[0]


def explain(agent, level, focus_x, x, y, tile):
    return json.loads(agent.explain(level, focus_x, x, y, tile))


def adaptation_metrics(jsonl):
    return json.loads(_core._adaptation_metrics(jsonl))


class Service:
    """In-process session service. Mirrors the HTTP routes one method each."""

    def __init__(self, sessions_dir="", checkpoint="", markov_corpus="", tau=0.5, cap=15, logical_clock=True):
        self._svc = _core._Service(sessions_dir, checkpoint, markov_corpus, tau, cap, logical_clock)

    def create_session(self, **config):
        return self._svc.create_session(json.dumps(config))

    def submit_edits(self, session_id, edits):
        return self._svc.submit_edits(session_id, json.dumps({"edits": list(edits)}))

    def end_turn(self, session_id, focus_x):
        return json.loads(self._svc.end_turn(session_id, focus_x))

    def remove_last_ai_turn(self, session_id):
        return json.loads(self._svc.remove_last_ai_turn(session_id))

    def reset_level(self, session_id, width=None):
        self._svc.reset_level(session_id, width)

    def close(self, session_id, reuse_ranking=None):
        return self._svc.close_session(session_id, reuse_ranking)

    def level(self, session_id):
        return Level.from_text(self._svc.level_text(session_id))

    def log(self, session_id):
        return [json.loads(line) for line in self._svc.export_log(session_id).splitlines() if line]


def simulate(persona, turns=30, seed=0, checkpoint="", **config):
    """Runs one persona-driven session. `persona` is a dict or a path to a persona JSON file."""
    if isinstance(persona, (str, os.PathLike)):
        with open(persona) as f:
            persona = json.load(f)
    result = json.loads(_core._simulate(json.dumps(persona), turns, seed, checkpoint, json.dumps(config)))
    result["log"] = [json.loads(line) for line in result["log"].splitlines() if line]
    return result
