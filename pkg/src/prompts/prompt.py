"""Category, hierarchical and referring prompts with per-label token spans."""
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

from ..core.errors import PromptError
from ..synthdata.vocabulary import OTHER_LABEL
from .tokenizer import HashTokenizer, Token

DELIMITER = "."
REFERENT_LABEL = "<referent>"

CATEGORY = "category"
HIERARCHICAL = "hierarchical"
REFERRING = "referring"
PROMPT_KINDS = (CATEGORY, HIERARCHICAL, REFERRING)

Span = Tuple[int, int]


@dataclass(frozen=True)
class PromptSpec:
    """A text prompt and the token ranges of each label inside it.

    Spans are half-open token index ranges. Classification columns follow
    ``column_labels`` and the "other" column comes last at ``other_index``.
    Referring prompts have no spans and a single referent column.
    """

    text: str
    kind: str
    tokens: Tuple[Token, ...]
    token_ids: Tuple[int, ...]
    labels: Tuple[str, ...] = ()
    label_spans: Dict[str, Tuple[Span, ...]] = field(default_factory=dict)
    thing_columns: Tuple[int, ...] = ()
    part_columns: Tuple[int, ...] = ()
    label_parent: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PROMPT_KINDS:
            raise PromptError(f"Unknown prompt kind '{self.kind}'")
        if self.kind == REFERRING and self.label_spans:
            raise PromptError("Referring prompts carry no label spans")
        if self.kind != REFERRING and not self.label_spans:
            raise PromptError(f"A {self.kind} prompt needs at least one label span")
        taken = set()
        for label, spans in self.label_spans.items():
            for start, end in spans:
                if not 0 <= start < end <= len(self.tokens):
                    raise PromptError(f"Span {start}:{end} of '{label}' outside the prompt")
                covered = set(range(start, end))
                if covered & taken:
                    raise PromptError(f"Span of '{label}' overlaps another label")
                taken |= covered

    @property
    def column_labels(self) -> Tuple[str, ...]:
        return (REFERENT_LABEL,) if self.kind == REFERRING else self.labels

    @property
    def num_columns(self) -> int:
        """Prompted columns plus the trailing "other" column."""
        return len(self.column_labels) + 1

    @property
    def other_index(self) -> int:
        return len(self.column_labels)

    def column_of(self, label: str) -> int:
        if label == OTHER_LABEL:
            return self.other_index
        try:
            return self.column_labels.index(label)
        except ValueError:
            raise PromptError(f"Label '{label}' is not part of the prompt") from None

    def __len__(self) -> int:
        return len(self.tokens)


def _validate_labels(labels: Sequence[str]):
    if not labels:
        raise PromptError("Prompt needs at least one label")
    seen = set()
    for label in labels:
        if not label or not label.strip():
            raise PromptError("Empty label")
        if DELIMITER in label:
            raise PromptError(f"Label '{label}' contains the delimiter '{DELIMITER}'")
        if label == OTHER_LABEL:
            raise PromptError(f"'{OTHER_LABEL}' is reserved and cannot be prompted")
        key = label.casefold()
        if key in seen:
            raise PromptError(f"Duplicate label '{label}'")
        seen.add(key)


def _spans_for(labels: Sequence[str], tokens: Sequence[Token]) -> Dict[str, Tuple[Span, ...]]:
    spans = {}
    offset = 0
    for label in labels:
        lo, hi = offset, offset + len(label)
        idx = [i for i, tok in enumerate(tokens) if tok.start >= lo and tok.end <= hi]
        if not idx:
            raise PromptError(f"Label '{label}' produces no tokens")
        spans[label] = ((idx[0], idx[-1] + 1),)
        offset = hi + len(DELIMITER)
    return spans


def _build(labels: Sequence[str], kind: str, tokenizer: HashTokenizer, **extra) -> PromptSpec:
    _validate_labels(labels)
    text = DELIMITER.join(labels)
    tokens = tokenizer.tokenize(text)
    return PromptSpec(
        text=text,
        kind=kind,
        tokens=tuple(tokens),
        token_ids=tuple(tokenizer.token_id(t.text) for t in tokens),
        labels=tuple(labels),
        label_spans=_spans_for(labels, tokens),
        **extra,
    )


def build_category_prompt(labels: Sequence[str], tokenizer: HashTokenizer = None) -> PromptSpec:
    """Join labels with "." into one prompt, e.g. "person.cat.sky"."""
    labels = list(labels)
    return _build(labels, CATEGORY, tokenizer or HashTokenizer())


def build_hierarchical_prompt(instance_classes: Sequence[str], part_classes: Sequence[str],
                              tokenizer: HashTokenizer = None) -> PromptSpec:
    """Bare instance names followed by every "<instance> <part>" label."""
    instance_classes = list(instance_classes)
    part_classes = list(part_classes)
    if not instance_classes or not part_classes:
        raise PromptError("Hierarchical prompt needs instance and part classes")
    pairs = [(inst, part) for inst in instance_classes for part in part_classes]
    labels = instance_classes + [f"{inst} {part}" for inst, part in pairs]
    n = len(instance_classes)
    return _build(
        labels,
        HIERARCHICAL,
        tokenizer or HashTokenizer(),
        thing_columns=tuple(range(n)),
        part_columns=tuple(range(n, len(labels))),
        label_parent={f"{inst} {part}": inst for inst, part in pairs},
    )


def build_referring_prompt(expression: str, tokenizer: HashTokenizer = None) -> PromptSpec:
    tokenizer = tokenizer or HashTokenizer()
    tokens = tokenizer.tokenize(expression)
    if not tokens:
        raise PromptError("Referring expression is empty")
    return PromptSpec(
        text=expression,
        kind=REFERRING,
        tokens=tuple(tokens),
        token_ids=tuple(tokenizer.token_id(t.text) for t in tokens),
    )
