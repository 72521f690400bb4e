"""Label space: thing, stuff and part classes plus part grouping."""
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

from ..core.errors import PromptError

OTHER_LABEL = "other"


@dataclass(frozen=True)
class Vocabulary:
    """Class names for things, stuff and parts.

    ``other_index`` is the reserved column that follows every prompted class.
    ``thing_parts`` lists the parts each thing class is made of, and
    ``part_grouping`` maps a group name (e.g. "upper") to the part names it unions.
    """

    thing_classes: Tuple[str, ...]
    stuff_classes: Tuple[str, ...]
    part_classes: Tuple[str, ...]
    part_grouping: Mapping[str, FrozenSet[str]] = field(default_factory=dict)
    thing_parts: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "thing_classes", tuple(self.thing_classes))
        object.__setattr__(self, "stuff_classes", tuple(self.stuff_classes))
        object.__setattr__(self, "part_classes", tuple(self.part_classes))
        object.__setattr__(self, "part_grouping",
                           {g: frozenset(p) for g, p in dict(self.part_grouping).items()})
        object.__setattr__(self, "thing_parts",
                           {t: tuple(p) for t, p in dict(self.thing_parts).items()})

        names = list(self.thing_classes) + list(self.stuff_classes) + list(self.part_classes)
        if len(set(names)) != len(names):
            raise ValueError("Class names must be unique across thing, stuff and part lists")
        if OTHER_LABEL in names:
            raise ValueError(f"'{OTHER_LABEL}' is reserved")
        parts = set(self.part_classes)
        for group, members in self.part_grouping.items():
            missing = set(members) - parts
            if missing:
                raise ValueError(f"Group '{group}' names unknown parts: {sorted(missing)}")
        for thing, thing_parts in self.thing_parts.items():
            if thing not in self.thing_classes:
                raise ValueError(f"Parts registered for unknown thing class '{thing}'")
            missing = set(thing_parts) - parts
            if missing:
                raise ValueError(f"Thing '{thing}' uses unknown parts: {sorted(missing)}")

    @property
    def all_labels(self) -> List[str]:
        return list(self.thing_classes) + list(self.stuff_classes)

    @property
    def other_index(self) -> int:
        return len(self.all_labels)

    def is_thing(self, label: str) -> bool:
        return label in self.thing_classes

    def parts_of(self, thing: str) -> Tuple[str, ...]:
        return self.thing_parts.get(thing, ())

    def group_of(self, part: str) -> Optional[str]:
        for group in sorted(self.part_grouping):
            if part in self.part_grouping[group]:
                return group
        return None

    def hierarchical_label(self, instance: str, part: str) -> str:
        return f"{instance} {part}"

    def hierarchical_labels(self) -> List[str]:
        return [self.hierarchical_label(t, p) for t in self.thing_classes for p in self.part_classes]

    def split_hierarchical_label(self, label: str) -> Tuple[str, str]:
        """Split "<instance> <part>" using the registered thing names."""
        return split_hierarchical_label(label, self.thing_classes)

    def split(self, novel_things: Sequence[str], novel_stuff: Sequence[str]) -> Tuple["Vocabulary", "Vocabulary"]:
        """Return (seen, full) vocabularies with the novel classes held out of ``seen``."""
        unknown = (set(novel_things) - set(self.thing_classes)) | (set(novel_stuff) - set(self.stuff_classes))
        if unknown:
            raise ValueError(f"Held-out classes not in vocabulary: {sorted(unknown)}")
        seen = Vocabulary(
            thing_classes=tuple(t for t in self.thing_classes if t not in novel_things),
            stuff_classes=tuple(s for s in self.stuff_classes if s not in novel_stuff),
            part_classes=self.part_classes,
            part_grouping=self.part_grouping,
            thing_parts={t: p for t, p in self.thing_parts.items() if t not in novel_things},
        )
        return seen, self

    def to_dict(self) -> Dict:
        return {
            "thing_classes": list(self.thing_classes),
            "stuff_classes": list(self.stuff_classes),
            "part_classes": list(self.part_classes),
            "part_grouping": {g: sorted(p) for g, p in sorted(self.part_grouping.items())},
            "thing_parts": {t: list(p) for t, p in sorted(self.thing_parts.items())},
        }

    @classmethod
    def from_dict(cls, record: Mapping) -> "Vocabulary":
        return cls(
            thing_classes=tuple(record["thing_classes"]),
            stuff_classes=tuple(record["stuff_classes"]),
            part_classes=tuple(record.get("part_classes", ())),
            part_grouping={g: frozenset(p) for g, p in record.get("part_grouping", {}).items()},
            thing_parts={t: tuple(p) for t, p in record.get("thing_parts", {}).items()},
        )


def split_hierarchical_label(label: str, instance_names: Sequence[str]) -> Tuple[str, str]:
    """Longest registered instance prefix followed by a space wins."""
    best = None
    for name in instance_names:
        if label.startswith(name + " ") and len(label) > len(name) + 1:
            if best is None or len(name) > len(best):
                best = name
    if best is None:
        raise PromptError(f"No registered instance prefix for part label '{label}'")
    return best, label[len(best) + 1:]


def default_vocabulary() -> Vocabulary:
    """Six thing classes with two or three parts each and four stuff classes."""
    thing_parts = {
        "cat": ("head", "body", "tail"),
        "dog": ("head", "body", "leg"),
        "car": ("roof", "wheel"),
        "bird": ("head", "wing", "tail"),
        "person": ("head", "torso", "leg"),
        "giraffe": ("neck", "body", "leg"),
    }
    part_classes = ("head", "neck", "roof", "body", "torso", "wing", "tail", "leg", "wheel")
    grouping = {
        "upper": frozenset({"head", "neck", "roof"}),
        "middle": frozenset({"body", "torso", "wing"}),
        "lower": frozenset({"tail", "leg", "wheel"}),
    }
    return Vocabulary(
        thing_classes=tuple(thing_parts),
        stuff_classes=("sky", "grass", "water", "wall"),
        part_classes=part_classes,
        part_grouping=grouping,
        thing_parts=thing_parts,
    )


# Held out of training by default; used only at evaluation.
DEFAULT_NOVEL_THINGS = ("giraffe",)
DEFAULT_NOVEL_STUFF = ("wall",)
