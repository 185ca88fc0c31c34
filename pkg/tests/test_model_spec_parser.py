import numpy as np
import pytest

from modules.model_spec_parser import load_model_spec, parse_host, parse_model_spec
from utils.errors import ConfigError

EXP_COMP = """
# sphere exponential written as a composite
family=exp_comp
params.t=3
host=sphere(dim=2, radius=1)
base{
  family=sphere_linear
}
"""


def test_parse_combinator_with_inherited_host():
    model = parse_model_spec(EXP_COMP)
    assert model.family == "exp_comp"
    assert model.params["t"] == 3.0
    assert model.operands[0].family == "sphere_linear"
    assert model.operands[0].host == model.host


def test_parse_correlation_block():
    model = parse_model_spec("family=median_indicator\nhost=euclidean(dim=2)\ncorrelation{\n"
                             "  family=exponential\n  params.scale=2\n}\n")
    assert model.correlation.family == "exponential"
    assert model.from_distance(2 * np.log(2)) == pytest.approx(1 / 6)


def test_parse_mixture_atoms():
    text = """family=mixture
host=euclidean(dim=1)
atom{
  weight=0.25
  correlation{
    family=gaussian
    params.scale=1
  }
}
atom{
  weight=0.5
  family=exponential
  params.a=2
}
"""
    model = parse_model_spec(text)
    weights = [a.weight for a in model.mixture.atoms]
    assert weights == [0.25, 0.5]
    assert model.mixture.atoms[1].component.family == "exponential"


def test_graph_host_from_file(tmp_path):
    (tmp_path / "path.txt").write_text("3\n0 1\n1 2\n", encoding="utf-8")
    spec = tmp_path / "model.spec"
    spec.write_text("family=exponential\nparams.a=1\nhost=graph(file=path.txt, metric=resistance)\n",
                    encoding="utf-8")
    model = load_model_spec(spec)
    assert model.host.graph.n_vertices == 3
    assert model.matrix([0, 2])[0, 1] == pytest.approx((1 - np.exp(-np.sqrt(2))) / 4)


@pytest.mark.parametrize("text,line", [
    ("family=exponential\nhost=euclidean(dim=1)\nfoo{\n}\n", 3),
    ("family=exponential\n}\n", 2),
    ("family=exponential\nparams.a=1\nhost=euclidean(dim=1)\ncolour=red\n", 4),
    ("family=exponential\nparams.a=abc\nhost=euclidean(dim=1)\n", 2),
    ("family=exponential\nparams.a=-1\nhost=euclidean(dim=1)\n", 1),
    ("family=exponential\nfamily=gamma\n", 2),
    ("host=euclidean(dim=1)\nbase{\n  family=zero\n", 2),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_model_spec(text)
    assert exc.value.line == line


def test_missing_host():
    with pytest.raises(ConfigError, match="no host"):
        parse_model_spec("family=exponential\nparams.a=1\n")


def test_bad_host_argument():
    with pytest.raises(ConfigError, match="unknown host argument"):
        parse_host("euclidean(dim=2, radius=1)")


def test_missing_model_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_model_spec(tmp_path / "nope.spec")
