"""Label variants, examples, and labeled-set invariants."""

import pytest

from taskspace.data import Example, Label, LabeledSet
from taskspace.errors import ContractViolation


def test_class_label():
    lab = Label.of_class(3)
    assert lab.kind == "class" and lab.value == 3


def test_distribution_label_must_sum_to_one():
    Label.of_distribution([0.25, 0.25, 0.5])
    with pytest.raises(ContractViolation):
        Label.of_distribution([0.5, 0.6])
    with pytest.raises(ContractViolation):
        Label.of_distribution([-0.5, 1.5])


def test_scalar_label_must_be_finite():
    Label.of_scalar(2.5)
    with pytest.raises(ContractViolation):
        Label.of_scalar(float("inf"))


def test_tokens_label_rejects_negative_ids():
    Label.of_tokens([3, 4, 5])
    with pytest.raises(ContractViolation):
        Label.of_tokens([3, -1])


def test_validate_for_extents():
    Label.of_class(2).validate_for(vocab_size=8, num_classes=3, seq_out_len=4)
    with pytest.raises(ContractViolation):
        Label.of_class(3).validate_for(8, 3, 4)
    with pytest.raises(ContractViolation):
        Label.of_distribution([0.5, 0.5]).validate_for(8, 3, 4)
    with pytest.raises(ContractViolation):
        Label.of_tokens([3, 4, 5, 6, 7]).validate_for(8, 3, 4)
    with pytest.raises(ContractViolation):
        Label.of_tokens([9]).validate_for(8, 3, 4)


def test_label_json_roundtrip():
    for lab in (Label.of_class(1), Label.of_distribution([0.5, 0.5]),
                Label.of_scalar(2.0), Label.of_tokens([3, 4])):
        assert Label.from_json(lab.to_json()) == lab


def test_example_rejects_empty_tokens():
    with pytest.raises(ContractViolation):
        Example((), Label.of_class(0))


def test_labeled_set_uniform_kind():
    with pytest.raises(ContractViolation):
        LabeledSet([Example((3,), Label.of_class(0)),
                    Example((4,), Label.of_scalar(1.0))])
    with pytest.raises(ContractViolation):
        LabeledSet([])


def test_labeled_set_subset():
    data = LabeledSet([Example((3 + i,), Label.of_class(i % 2)) for i in range(4)])
    sub = data.subset([1, 3])
    assert len(sub) == 2
    assert sub[0].tokens == (4,)
