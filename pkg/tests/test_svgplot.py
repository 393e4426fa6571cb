import numpy as np

from taylorlab.svgplot import Plot


def test_render_log_axes_and_reference(tmp_path):
    x = np.geomspace(1, 100, 20)
    p = Plot("decay", "1+T", "norm", xlog=True, ylog=True)
    p.line(x, x ** -0.75, "data")
    p.line(x, np.where(x > 10, 0.0, 1.0), "with zeros")
    p.reference_slope(x, -0.75, 1.0, 1.0, "slope -3/4")
    out = p.render()
    assert out.startswith("<svg") and out.rstrip().endswith("</svg>")
    assert out.count("<polyline") == 3 and 'stroke-dasharray="5,4"' in out
    assert "slope -3/4" in out
    p.save(tmp_path / "a.svg")
    assert (tmp_path / "a.svg").read_text() == out


def test_render_is_deterministic_and_escapes():
    p = Plot("a < b", "x", "y")
    p.line([0, 1, 2], [1, 0, 1], "f & g")
    assert p.render() == p.render()
    assert "a &lt; b" in p.render() and "f &amp; g" in p.render()


def test_empty_plot():
    assert "<svg" in Plot().render()
