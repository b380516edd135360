"""Metric tables: models x clips x downsampling methods x scales.

Evaluates two fresh models full-frame under bicubic and bilinear
degradation, writes the CSV/JSON report, and reads it back losslessly.
"""

from vsrlab.evaluate import compare_models, format_table, read_report, write_report
from vsrlab.gen import GeneratorSpec, build_generator

from _common import make_clip, out_dir

models = {
    "residual_small": build_generator(GeneratorSpec("residual_based", 16, 2, (2,)), seed=0),
    "residual_tiny": build_generator(GeneratorSpec("residual_based", 8, 1, (1,)), seed=1),
}
clipset = [(f"clip_{i}", make_clip(seed=i, n=3, h=64, w=64)) for i in range(2)]

report = compare_models(models, clipset, scales=(2,), methods=("bicubic", "bilinear"))
print(format_table(report))
print(f"\nrows: {report.total_rows} (2 models x 2 clips x 2 methods x 1 scale)")

target = out_dir("report")
paths = write_report(report, target)
print("written:", ", ".join(p.name for p in paths))

round_tripped = read_report(target)
print(f"report round-trips losslessly: {round_tripped == report}")
