"""Generator building blocks and their analytic identities.

Shows the fixed maps the architecture collapses to with zeroed weights,
the non-local block's identity at initialisation, and the shape contract
of the 2x model applied once and cascaded for 4x.
"""

import torch

from vsrlab.gen import (
    Generator,
    GeneratorSpec,
    NonLocalBlock3D,
    NonLocalSpec,
    RRDB,
    ResidualBlock,
    build_generator,
    count_parameters,
    generator_forward,
)

from _common import make_clip

torch.manual_seed(0)

x = torch.rand(2, 8, 6, 6)
residual = ResidualBlock(8)
rrdb = RRDB(8)
with torch.no_grad():
    for module in (residual, rrdb):
        for p in module.parameters():
            p.zero_()
print(f"residual block, zero weights: max |out - (2/3)x| = {(residual(x) - x * (2 / 3)).abs().max():.2e}")
print(f"rrdb, zero weights:           max |out - (35/27)x| = {(rrdb(x) - x * (35 / 27)).abs().max():.2e}")

for pairwise in ("gaussian", "embedded_gaussian", "dot_product", "concatenation"):
    block = NonLocalBlock3D(NonLocalSpec(8, pairwise=pairwise))
    xs = torch.rand(3, 8, 4, 4)
    print(f"non-local ({pairwise}), fresh block is identity: "
          f"max |out - x| = {(block(xs) - xs).abs().max():.2e}")

spec = GeneratorSpec("residual_based", 16, 2, (2,), "dot_product")
model = build_generator(spec, seed=1)
clip = make_clip(seed=3, n=3, h=16, w=16)
once = generator_forward(clip, model)
twice = generator_forward(once, model)
print(f"\n2x pass:   {clip.height}x{clip.width} -> {once.height}x{once.width}")
print(f"cascaded:  {once.height}x{once.width} -> {twice.height}x{twice.width}")

for t in (1, 3, 5, 7):
    seq = make_clip(seed=t, n=t, h=16, w=16)
    out = generator_forward(seq, model)
    assert out.frames.shape == (t, 3, 32, 32)
print("variable sequence lengths 1/3/5/7 accepted with unchanged weights")

rrdb_model = Generator(GeneratorSpec.default("rrdb_based"))
residual_model = Generator(GeneratorSpec.default("residual_based"))
print(
    f"\nparameters: rrdb_based {count_parameters(rrdb_model):,} "
    f"> residual_based {count_parameters(residual_model):,}"
)
