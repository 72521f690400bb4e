import json

import numpy as np
import pytest
from scipy import ndimage

from src.core.errors import PromptError, SceneGenerationError
from src.synthdata.generator import GeneratorConfig, generate_scene
from src.synthdata.manifest import (generate_dataset, load_external_masks, load_manifest, load_manifest_vocabulary,
                                    write_external_masks)
from src.synthdata.vocabulary import (DEFAULT_NOVEL_STUFF, DEFAULT_NOVEL_THINGS, Vocabulary, default_vocabulary,
                                      split_hierarchical_label)


def test_generate_scene_is_deterministic(gen_config):
    a = generate_scene(gen_config, 11)
    b = generate_scene(gen_config, 11)
    assert np.array_equal(a.image, b.image)
    assert [i.mask for i in a.instances] == [i.mask for i in b.instances]
    assert [s.mask for s in a.stuff_regions] == [s.mask for s in b.stuff_regions]
    assert a.referring == b.referring


def test_zero_instances_stuff_tiles_image(gen_config):
    gen_config.min_instances = gen_config.max_instances = 0
    sample = generate_scene(gen_config, 3)
    assert sample.instances == []
    union = np.zeros((sample.height, sample.width), dtype=bool)
    for region in sample.stuff_regions:
        union |= region.mask.data
    assert union.all()


def test_distinct_instances_are_disjoint_with_contained_parts(gen_config):
    gen_config.min_instances = gen_config.max_instances = 2
    gen_config.distinct_classes = True
    sample = generate_scene(gen_config, 5)
    a, b = sample.instances
    assert a.class_name != b.class_name
    assert not np.any(a.mask.data & b.mask.data)
    for inst in sample.instances:
        assert inst.parts
        union = np.zeros_like(inst.mask.data)
        for part in inst.parts:
            assert not np.any(part.mask.data & ~inst.mask.data)
            union |= part.mask.data
        assert np.array_equal(union, inst.mask.data)


def test_things_connected_and_some_stuff_disconnected(gen_config):
    found_disconnected = False
    for seed in range(10):
        sample = generate_scene(gen_config, seed)
        for inst in sample.instances:
            _, n = ndimage.label(inst.mask.data)
            assert n == 1
        for region in sample.stuff_regions:
            _, n = ndimage.label(region.mask.data)
            found_disconnected |= n > 1
    assert found_disconnected


def test_referring_expressions_point_at_instances(gen_config):
    for seed in range(5):
        sample = generate_scene(gen_config, seed)
        for expr in sample.referring:
            inst = sample.instances[expr.target]
            assert inst.class_name in expr.text
            assert expr.text.startswith("the ")


def test_too_small_image_raises(tiny_vocabulary):
    cfg = GeneratorConfig(vocabulary=tiny_vocabulary, height=10, width=10, min_instances=3, max_instances=3,
                          min_size=8, max_size=8, max_attempts=20)
    with pytest.raises(SceneGenerationError):
        generate_scene(cfg, 0)


def test_generator_needs_things_and_stuff():
    vocab = Vocabulary(thing_classes=("cat",), stuff_classes=(), part_classes=())
    with pytest.raises(SceneGenerationError):
        generate_scene(GeneratorConfig(vocabulary=vocab), 0)


def test_generate_dataset_round_trip(gen_config, tmp_path):
    path = generate_dataset(gen_config, 4, 5, tmp_path / "set", name="train")
    samples = load_manifest(path)
    assert len(samples) == 5
    for sample in samples:
        sample.validate()
    original = generate_scene(gen_config, json.loads(path.read_text())["samples"][0]["seed"])
    assert np.allclose(samples[0].image, original.image, atol=1 / 255)
    assert [i.mask for i in samples[0].instances] == [i.mask for i in original.instances]
    assert load_manifest_vocabulary(path) == gen_config.vocabulary


def test_generate_dataset_empty_and_byte_identical(gen_config, tmp_path):
    empty = generate_dataset(gen_config, 0, 0, tmp_path / "empty")
    assert json.loads(empty.read_text())["samples"] == []

    first = generate_dataset(gen_config, 9, 2, tmp_path / "a").read_bytes()
    second = generate_dataset(gen_config, 9, 2, tmp_path / "b").read_bytes()
    assert first == second


def test_external_masks_round_trip(gen_config, tmp_path):
    sample = generate_scene(gen_config, 1)
    masks = [p.mask for inst in sample.instances for p in inst.parts]
    path = write_external_masks(masks, tmp_path / "parts.json")
    assert load_external_masks(path) == masks


def test_vocabulary_split_holds_out_novel_classes():
    seen, full = default_vocabulary().split(DEFAULT_NOVEL_THINGS, DEFAULT_NOVEL_STUFF)
    assert "giraffe" not in seen.thing_classes and "giraffe" in full.thing_classes
    assert "wall" not in seen.stuff_classes
    assert seen.part_classes == full.part_classes
    with pytest.raises(ValueError):
        default_vocabulary().split(["unicorn"], [])


def test_vocabulary_rejects_duplicates_and_reserved_names():
    with pytest.raises(ValueError):
        Vocabulary(thing_classes=("cat",), stuff_classes=("cat",), part_classes=())
    with pytest.raises(ValueError):
        Vocabulary(thing_classes=("other",), stuff_classes=("sky",), part_classes=())
    with pytest.raises(ValueError):
        Vocabulary(thing_classes=("cat",), stuff_classes=("sky",), part_classes=("head",),
                   part_grouping={"upper": {"ear"}})


def test_vocabulary_dict_round_trip():
    vocab = default_vocabulary()
    assert Vocabulary.from_dict(vocab.to_dict()) == vocab
    assert vocab.other_index == len(vocab.thing_classes) + len(vocab.stuff_classes)
    assert vocab.group_of("tail") == "lower"


def test_split_hierarchical_label_longest_prefix():
    names = ["sea", "sea lion"]
    assert split_hierarchical_label("sea lion head", names) == ("sea lion", "head")
    assert split_hierarchical_label("sea floor", names) == ("sea", "floor")
    with pytest.raises(PromptError):
        split_hierarchical_label("cat head", names)
