from pathlib import Path

from scruf.model import AgentAllocation, Item, ScoredList, StepRecord

ROOT = Path(__file__).resolve().parents[1]
EXAMPLE_DIR = ROOT / "presets" / "example"
DATA_DIR = Path(__file__).resolve().parent / "data"


def record(t, items, user="u", fairness=None):
    """A minimal step record whose output list holds ``items``."""
    out = ScoredList((i, float(len(items) - n)) for n, i in enumerate(items))
    return StepRecord(t, user, out, {}, out, AgentAllocation({}), fairness or {}, {})


def make_items(protected_by_agent):
    """Catalog from {item_id: set of agent names that protect it}."""
    return {i: Item(i, {}, {a: True for a in agents}) for i, agents in protected_by_agent.items()}
