import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbclf.corpus import LabeledExample
from bbclf.errors import (
    InsufficientDataError,
    StateError,
    TemplateError,
    ValidationError,
)
from bbclf.prompt import (
    MASK,
    TaskSpec,
    append_demonstrations,
    apply_template,
    default_registry,
    get_task,
    load_registry,
    sample_demonstrations,
    verbalize,
)


@pytest.fixture
def figure_task():
    # Sentiment task with the terrible/great word map used in the
    # demonstration examples below.
    return TaskSpec(
        name="sentiment-demo",
        label_space=("negative", "positive"),
        template="<X> . It was [MASK] .",
        verbalizer={"negative": "terrible", "positive": "great"},
        is_pair=False,
    )


class TestTaskSpecValidation:
    def test_requires_single_mask(self):
        with pytest.raises(ValidationError):
            TaskSpec("t", ("a", "b"), "<X> [MASK] [MASK]", {"a": "x", "b": "y"}, False)

    def test_requires_injective_verbalizer(self):
        with pytest.raises(ValidationError, match="injective"):
            TaskSpec("t", ("a", "b"), "<X> [MASK]", {"a": "x", "b": "x"}, False)

    def test_requires_two_labels(self):
        with pytest.raises(ValidationError):
            TaskSpec("t", ("a",), "<X> [MASK]", {"a": "x"}, False)

    def test_requires_full_verbalizer(self):
        with pytest.raises(ValidationError, match="missing"):
            TaskSpec("t", ("a", "b"), "<X> [MASK]", {"a": "x"}, False)


class TestApplyTemplate:
    def test_sentiment_rendering(self):
        spec = get_task("sst2")
        prompt = apply_template(spec, "no apparent joy")
        assert prompt.rendered == "no apparent joy . It was [MASK] ."

    def test_question_prefix_rendering(self):
        spec = get_task("trec")
        prompt = apply_template(spec, "what does NASA stand for ?")
        assert prompt.rendered == "[MASK] question: what does NASA stand for ?"

    def test_pair_rendering(self, pair_task):
        prompt = apply_template(pair_task, ("q1", "q2"))
        assert prompt.rendered == "q1 ? [MASK] , q2"

    def test_mask_slot_index_points_at_mask(self, pair_task):
        prompt = apply_template(pair_task, ("alpha", "beta"))
        at = prompt.mask_slot_index
        assert prompt.rendered[at : at + len(MASK)] == MASK

    def test_arity_mismatch_raises(self, toy_task, pair_task):
        with pytest.raises(TemplateError):
            apply_template(pair_task, "only one segment")
        with pytest.raises(TemplateError):
            apply_template(toy_task, ("a", "b"))

    def test_segment_containing_mask_rejected(self, toy_task):
        with pytest.raises(TemplateError):
            apply_template(toy_task, "sneaky [MASK] inside")

    @settings(max_examples=50)
    @given(text=st.text(alphabet=st.characters(blacklist_characters="[<"), min_size=1))
    def test_exactly_one_mask_always(self, text):
        from bbclf.testing import make_toy_task

        prompt = apply_template(make_toy_task(), text)
        assert prompt.rendered.count(MASK) == 1


class TestVerbalize:
    def test_table_words(self):
        assert verbalize(get_task("sst2"), "positive") == "great"
        assert verbalize(get_task("snli"), "contradiction") == "no"

    def test_direct_label_use(self):
        spec = get_task("trec")
        for label in spec.label_space:
            assert verbalize(spec, label) == label

    def test_unknown_label(self, toy_task):
        with pytest.raises(ValidationError):
            verbalize(toy_task, "sideways")

    def test_inverse_roundtrip(self):
        for spec in default_registry().values():
            for label in spec.label_space:
                assert spec.label_for_word(verbalize(spec, label)) == label


class TestDemonstrations:
    def test_one_per_label(self, toy_task, toy_split):
        demos = sample_demonstrations(toy_split, toy_task, seed=1)
        assert set(demos.by_label) == set(toy_task.label_space)

    def test_three_way_size(self):
        from bbclf.corpus import sample_few_shot
        from bbclf.testing import make_toy_examples, make_toy_task

        labels = ("entailment", "neutral", "contradiction")
        task = make_toy_task(name="toy-nli", labels=labels)
        data = make_toy_examples(labels, n_per_class=40, seed=2)
        split = sample_few_shot(data, k=8, seed=1)
        demos = sample_demonstrations(split, task, seed=1)
        assert len(demos.by_label) == 3

    def test_deterministic(self, toy_task, toy_split):
        a = sample_demonstrations(toy_split, toy_task, seed=5)
        b = sample_demonstrations(toy_split, toy_task, seed=5)
        assert a == b

    def test_missing_class_raises(self, toy_task, toy_split):
        starved = toy_split.__class__(
            train=tuple(ex for ex in toy_split.train if ex.label != "positive"),
            dev=toy_split.dev,
            seed=toy_split.seed,
            k=toy_split.k,
        )
        with pytest.raises(InsufficientDataError):
            sample_demonstrations(starved, toy_task, seed=1)


class TestAppendDemonstrations:
    def _demos(self, figure_task):
        from bbclf.prompt import DemonstrationSet

        return DemonstrationSet(
            by_label={
                "negative": LabeledExample(
                    "The worst film a man has made", None, "negative"
                ),
                "positive": LabeledExample(
                    "A sweet and delightful surprise", None, "positive"
                ),
            },
            seed=0,
        )

    def test_demo_mask_filled_with_label_word(self, figure_task):
        prompt = apply_template(figure_task, "no apparent joy")
        appended = append_demonstrations(prompt, self._demos(figure_task), figure_task)
        assert "The worst film a man has made . It was terrible ." in appended.rendered
        assert appended.rendered.count(MASK) == 1

    def test_contains_all_label_words_in_order(self, figure_task):
        prompt = apply_template(figure_task, "no apparent joy")
        appended = append_demonstrations(prompt, self._demos(figure_task), figure_task)
        assert "terrible" in appended.rendered
        assert "great" in appended.rendered
        assert appended.rendered.index("terrible") < appended.rendered.index("great")

    def test_original_prompt_comes_first(self, figure_task):
        prompt = apply_template(figure_task, "no apparent joy")
        appended = append_demonstrations(prompt, self._demos(figure_task), figure_task)
        assert appended.rendered.startswith(prompt.rendered)
        assert appended.mask_slot_index == prompt.mask_slot_index

    def test_double_append_is_a_state_error(self, figure_task):
        prompt = apply_template(figure_task, "no apparent joy")
        appended = append_demonstrations(prompt, self._demos(figure_task), figure_task)
        with pytest.raises(StateError):
            append_demonstrations(appended, self._demos(figure_task), figure_task)

    def test_idempotent_rendering(self, figure_task):
        prompt = apply_template(figure_task, "no apparent joy")
        a = append_demonstrations(prompt, self._demos(figure_task), figure_task)
        b = append_demonstrations(prompt, self._demos(figure_task), figure_task)
        assert a == b


class TestRegistry:
    def test_default_registry_has_eight_tasks(self):
        assert len(default_registry()) == 8

    def test_load_registry_file(self, registry_file, toy_task):
        registry = load_registry(registry_file)
        assert registry[toy_task.name].template == toy_task.template

    def test_unknown_task(self):
        with pytest.raises(ValidationError, match="unknown task"):
            get_task("no-such-task")
