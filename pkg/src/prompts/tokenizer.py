"""Hash-vocabulary tokenizer: case-folded words and punctuation marks."""
import re
import zlib
from dataclasses import dataclass
from typing import List

TOKEN_PATTERN = re.compile(r"\w+|[^\w\s]")
PAD_ID = 0


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


class HashTokenizer:
    """Deterministic tokenizer with no vocabulary file.

    Ids are crc32 hashes folded into ``[1, vocab_size)``; id 0 is padding.
    """

    def __init__(self, vocab_size: int = 4096):
        if vocab_size < 2:
            raise ValueError("vocab_size must be at least 2")
        self.vocab_size = vocab_size

    def tokenize(self, text: str) -> List[Token]:
        """Offsets index the original text; only the token text is case-folded."""
        return [Token(m.group(0).casefold(), m.start(), m.end()) for m in TOKEN_PATTERN.finditer(text)]

    def token_id(self, token: str) -> int:
        return zlib.crc32(token.encode("utf-8")) % (self.vocab_size - 1) + 1

    def encode(self, text: str) -> List[int]:
        return [self.token_id(tok.text) for tok in self.tokenize(text)]
