import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import tuple_passes
from pkgquery import paql
from pkgquery.relation import (
    RelationError,
    Schema,
    apply_base_predicate,
    attribute_stats,
    from_columns,
    load_csv,
    save_csv,
)


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCsv:
    def test_kind_inference(self, tmp_path):
        rel = load_csv(write(tmp_path, "pk,gluten,kcal,fat\n1,free,0.3,0.1\n2,full,0.9,0.2\n3,free,0.7,0.3\n"))
        assert rel.n == 3
        kinds = dict(rel.schema.attributes)
        assert kinds == {"pk": "numeric", "gluten": "categorical",
                         "kcal": "numeric", "fat": "numeric"}

    def test_header_only(self, tmp_path):
        rel = load_csv(write(tmp_path, "a,b\n"))
        assert rel.n == 0

    def test_nan_rejected(self, tmp_path):
        with pytest.raises(RelationError, match="non-finite"):
            load_csv(write(tmp_path, "a\n1.0\nNaN\n"))

    def test_inf_rejected(self, tmp_path):
        with pytest.raises(RelationError, match="non-finite"):
            load_csv(write(tmp_path, "a\ninf\n"))

    def test_duplicate_header(self, tmp_path):
        with pytest.raises(RelationError, match="duplicate"):
            load_csv(write(tmp_path, "a,a\n1,2\n"))

    def test_ragged_row(self, tmp_path):
        with pytest.raises(RelationError, match="expected 2 fields"):
            load_csv(write(tmp_path, "a,b\n1,2\n3\n"))

    def test_hint_numeric_on_text(self, tmp_path):
        with pytest.raises(RelationError, match="non-numeric"):
            load_csv(write(tmp_path, "a\nfoo\n"), schema_hints={"a": "numeric"})

    def test_hint_categorical_keeps_digits(self, tmp_path):
        rel = load_csv(write(tmp_path, "a\n1\n2\n"), schema_hints={"a": "categorical"})
        assert rel.categorical("a") == ["1", "2"]

    def test_empty_numeric_cell_rejected_with_hint(self, tmp_path):
        with pytest.raises(RelationError, match="non-numeric"):
            load_csv(write(tmp_path, "a,b\n1.0,x\n,y\n"),
                     schema_hints={"a": "numeric"})

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_csv(tmp_path / "nope.csv")

    def test_roundtrip(self, tmp_path):
        rel = from_columns("T", {"x": [0.1, 2.5e-7, 123456.789], "tag": ["a", "b", "c"]},
                           kinds={"tag": "categorical"})
        path = tmp_path / "out.csv"
        save_csv(rel, path)
        back = load_csv(path)
        np.testing.assert_allclose(back.column("x"), rel.column("x"), rtol=1e-12)
        assert back.categorical("tag") == ["a", "b", "c"]


class TestSchema:
    def test_needs_attributes(self):
        with pytest.raises(RelationError):
            Schema("T", ())

    def test_rejects_empty_name(self):
        with pytest.raises(RelationError):
            Schema("T", (("", "numeric"),))

    def test_tuple_ids_and_rows(self, recipes):
        assert recipes.n == 5
        row = recipes.row(2)
        assert row.id == 2
        assert row.values[0] == 0.7
        with pytest.raises(RelationError):
            recipes.row(5)


def pred(*conjuncts):
    return paql.BasePredicate(tuple(paql.Comparison(*c) for c in conjuncts))


class TestBasePredicate:
    def test_categorical_filter(self):
        rel = from_columns("R", {"gluten": ["free", "full", "free"]},
                           kinds={"gluten": "categorical"})
        assert apply_base_predicate(rel, pred(("gluten", "=", "free"))).tolist() == [0, 2]

    def test_empty_relation(self):
        rel = from_columns("R", {"x": []})
        assert apply_base_predicate(rel, pred(("x", ">=", 0.0))).tolist() == []

    def test_numeric_threshold(self):
        rel = from_columns("R", {"kcal": [0.3, 0.9, 0.7]})
        assert apply_base_predicate(rel, pred(("kcal", ">=", 0.5))).tolist() == [1, 2]

    def test_unknown_attribute(self, recipes):
        with pytest.raises(RelationError, match="unknown attribute"):
            apply_base_predicate(recipes, pred(("nope", "=", 1.0)))

    def test_ordering_on_categorical_rejected(self, recipes):
        with pytest.raises(RelationError, match="not allowed"):
            apply_base_predicate(recipes, pred(("gluten", "<", "free")))

    def test_numeric_vs_string_rejected(self, recipes):
        with pytest.raises(RelationError, match="string"):
            apply_base_predicate(recipes, pred(("kcal", "=", "free")))

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_matches_per_tuple_reevaluation(self, data):
        n = data.draw(st.integers(1, 60))
        xs = data.draw(st.lists(
            st.integers(-5, 5).map(lambda v: v / 2.0), min_size=n, max_size=n))
        tags = data.draw(st.lists(st.sampled_from(["a", "b", "c"]), min_size=n, max_size=n))
        rel = from_columns("R", {"x": xs, "tag": tags}, kinds={"tag": "categorical"})
        op = data.draw(st.sampled_from(["=", "!=", "<", "<=", ">", ">="]))
        bound = data.draw(st.integers(-5, 5)) / 2.0
        p = pred(("x", op, bound), ("tag", "=", data.draw(st.sampled_from(["a", "b"]))))
        got = set(apply_base_predicate(rel, p).tolist())
        expected = {i for i in range(n) if tuple_passes(rel, p, i)}
        assert got == expected


class TestStats:
    def test_simple(self):
        rel = from_columns("R", {"kcal": [0.3, 0.9, 0.7]})
        lo, hi, mean = attribute_stats(rel, ["kcal"])["kcal"]
        assert (lo, hi) == (0.3, 0.9)
        assert abs(mean - 1.9 / 3) < 1e-12

    def test_single_tuple(self):
        rel = from_columns("R", {"x": [4.25]})
        assert attribute_stats(rel, ["x"])["x"] == (4.25, 4.25, 4.25)

    def test_empty_errors(self):
        rel = from_columns("R", {"x": []})
        with pytest.raises(RelationError, match="empty"):
            attribute_stats(rel, ["x"])

    def test_non_numeric_errors(self, recipes):
        with pytest.raises(RelationError, match="not numeric"):
            attribute_stats(recipes, ["gluten"])
