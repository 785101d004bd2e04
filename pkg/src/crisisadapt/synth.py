"""Synthetic crisis-message corpora with controllable transfer structure.

Relevant messages mix topic words from an event's pool into neutral
filler; irrelevant ones are neutral filler of the same length. The
neutral pool is shared by every event and appears in both classes, so
it carries no label signal: the only usable cue is the presence of
topic words. Two events built on the same pool are therefore mutually
transferable, while events on disjoint pools are not, because the
foreign topic words never occur in the source training data and their
embeddings stay at initialization. That gives experiments a known
ground truth: high cross-event accuracy within a pool, chance-level
accuracy across pools.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import CrisisRecord, EventDescriptor, EventSplits
from .rng import SplitMix64, mix_seed, shuffle

TOPIC_POOLS: dict[str, tuple[str, ...]] = {
    "storm": (
        "levee", "surge", "rainfall", "floodwater", "evacuation", "sandbags",
        "rescue", "shelter", "inundated", "overflow", "downpour", "submerged",
        "waterline", "embankment", "drainage", "upstream",
    ),
    "quake": (
        "aftershock", "rubble", "epicenter", "tremor", "collapsed", "magnitude",
        "seismic", "debris", "fault", "shaking", "landslide", "fissure",
        "masonry", "trapped", "richter", "foundations",
    ),
}

NEUTRAL_WORDS: tuple[str, ...] = (
    "the", "people", "today", "city", "news", "report", "said", "many",
    "area", "around", "still", "now", "update", "photo", "morning", "street",
    "local", "team", "seen", "near",
)

RAW_RELEVANT = "relevant"
RAW_NOT_RELEVANT = "not_relevant"


@dataclass(frozen=True)
class SynthEventSpec:
    event_id: str
    location_name: str
    crisis_name: str
    pool: str
    event_type: str | None = None


DEFAULT_EVENTS: tuple[SynthEventSpec, ...] = (
    SynthEventSpec("alpha_flood", "Avalon", "flood", "storm", "flood"),
    SynthEventSpec("beta_flood", "Brookton", "flood", "storm", "flood"),
    SynthEventSpec("gamma_quake", "Carden", "earthquake", "quake", "earthquake"),
)


def _pick(rng: SplitMix64, pool) -> str:
    return pool[rng.next_below(len(pool))]


def _message(rng: SplitMix64, topic_pool, relevant: bool) -> str:
    # both classes share one length distribution so length carries no signal
    n_filler = 4 + rng.next_below(3)
    n_marked = 2 + rng.next_below(2)
    words = [_pick(rng, NEUTRAL_WORDS) for _ in range(n_filler)]
    if relevant:
        words += [_pick(rng, TOPIC_POOLS[topic_pool]) for _ in range(n_marked)]
    else:
        words += [_pick(rng, NEUTRAL_WORDS) for _ in range(n_marked)]
    return " ".join(shuffle(words, rng.next_u64()))


def _records(spec: SynthEventSpec, split: str, n: int, seed: int) -> list[CrisisRecord]:
    rng = SplitMix64(mix_seed(seed, spec.event_id, split))
    out = []
    for i in range(n):
        relevant = i % 2 == 0
        out.append(
            CrisisRecord(
                id=f"{spec.event_id}:{split}:{i:04d}",
                text=_message(rng, spec.pool, relevant),
                raw_label=RAW_RELEVANT if relevant else RAW_NOT_RELEVANT,
                event_id=spec.event_id,
            )
        )
    return out


def generate_event(spec: SynthEventSpec, n_train: int, n_test: int, seed: int) -> EventSplits:
    """Balanced train/test records for one event (labels still raw)."""
    if n_train < 2 or n_test < 2:
        raise ValueError(f"need at least 2 train and 2 test records, got {n_train}/{n_test}")
    if spec.pool not in TOPIC_POOLS:
        raise ValueError(f"unknown topic pool {spec.pool!r}; have {sorted(TOPIC_POOLS)}")
    return EventSplits(
        train=_records(spec, "train", n_train, seed),
        test=_records(spec, "test", n_test, seed),
    )


def generate_corpus(
    specs=DEFAULT_EVENTS, n_train: int = 48, n_test: int = 24, seed: int = 0
) -> tuple[dict[str, EventSplits], dict[str, EventDescriptor]]:
    """Per-event splits plus the matching registry for a set of events."""
    if len({s.event_id for s in specs}) != len(specs):
        raise ValueError("duplicate event ids in synthetic corpus spec")
    splits = {s.event_id: generate_event(s, n_train, n_test, seed) for s in specs}
    registry = {
        s.event_id: EventDescriptor(
            event_id=s.event_id,
            location_name=s.location_name,
            crisis_name=s.crisis_name,
            event_type=s.event_type,
        )
        for s in specs
    }
    return splits, registry
