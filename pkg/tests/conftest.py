import numpy as np
import pytest
import torch

from src.core.geometry import BinaryMask
from src.decoders.config import DecoderConfig
from src.synthdata.generator import GeneratorConfig, generate_scene
from src.synthdata.vocabulary import Vocabulary


@pytest.fixture
def tiny_vocabulary():
    return Vocabulary(
        thing_classes=("cat", "dog", "giraffe"),
        stuff_classes=("sky", "grass", "wall"),
        part_classes=("head", "body", "leg"),
        part_grouping={"upper": {"head"}, "lower": {"body", "leg"}},
        thing_parts={"cat": ("head", "body"), "dog": ("head", "leg"), "giraffe": ("head", "body", "leg")},
    )


@pytest.fixture
def gen_config(tiny_vocabulary):
    return GeneratorConfig(vocabulary=tiny_vocabulary, height=32, width=32, min_instances=1, max_instances=2,
                           min_size=8, max_size=12)


@pytest.fixture
def scenes(gen_config):
    return [generate_scene(gen_config, seed) for seed in range(3)]


@pytest.fixture
def small_decoder_config():
    return DecoderConfig(num_thing_queries=4, num_stuff_queries=2, layers=1, d=16, heads=2, ffn_dim=32,
                         text_layers=1, text_heads=2, vocab_size=512)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


def mask_from(rows) -> BinaryMask:
    return BinaryMask(np.array(rows, dtype=bool))


def block_mask(height, width, y0, y1, x0, x1) -> BinaryMask:
    grid = np.zeros((height, width), dtype=bool)
    grid[y0:y1, x0:x1] = True
    return BinaryMask(grid)
