import json

import pytest

from bbclf.corpus import sample_few_shot
from bbclf.harness import RunConfig
from bbclf.prompt import TaskSpec
from bbclf.testing import make_toy_examples, make_toy_task, write_toy_dataset


@pytest.fixture
def toy_task() -> TaskSpec:
    return make_toy_task()


@pytest.fixture
def toy_data(toy_task):
    return make_toy_examples(toy_task.label_space, n_per_class=80, seed=7)


@pytest.fixture
def toy_split(toy_task, toy_data):
    return sample_few_shot(toy_data, k=16, seed=1)


@pytest.fixture
def pair_task() -> TaskSpec:
    return TaskSpec(
        name="toy-pair",
        label_space=("not_equivalent", "equivalent"),
        template="<X1> ? [MASK] , <X2>",
        verbalizer={"not_equivalent": "no", "equivalent": "yes"},
        is_pair=True,
    )


@pytest.fixture
def registry_file(tmp_path, toy_task):
    entry = {
        "template": toy_task.template,
        "label_space": list(toy_task.label_space),
        "verbalizer": toy_task.verbalizer,
        "is_pair": toy_task.is_pair,
    }
    path = tmp_path / "registry.json"
    path.write_text(json.dumps({toy_task.name: entry}))
    return path


@pytest.fixture
def mock_run_config(tmp_path, toy_task, registry_file):
    """Factory for small planted-mock run configs over generated toy data."""

    def build(n_per_class=200, n_test_per_class=40, **overrides):
        write_toy_dataset(tmp_path / "train.jsonl", toy_task.label_space, n_per_class, seed=11)
        write_toy_dataset(tmp_path / "test.jsonl", toy_task.label_space, n_test_per_class, seed=99)
        params = dict(
            task=toy_task.name,
            train_file=str(tmp_path / "train.jsonl"),
            test_file=str(tmp_path / "test.jsonl"),
            k=8,
            seeds=(1,),
            mock=True,
            pool_cap=200,
            mock_encoder={"d": 16, "mode": "planted", "noise_scale": 0.1},
            teacher_cfg={"max_steps": 100, "batch_size": 4},
            registry_path=str(registry_file),
            out_dir=str(tmp_path / "out"),
        )
        params.update(overrides)
        return RunConfig.from_dict(params)

    return build
