"""Expert routing stand-in: value-dependent shapes at every routing step.

nonzero/unique/masked_select produce tensors whose shapes depend on the
data, which the tracer cannot capture. None of these sites is fixable by
source rewriting, so this file must come back byte-identical.
"""

import torch


def forward(scores):
    x = torch.softmax(scores, dim=-1)
    acc = x.sum() * 0.0
    idx0 = torch.nonzero(x > 0.05)
    acc = acc + idx0.sum() * 1e-3
    val0 = x.unique()
    acc = acc + val0.sum()
    sel0 = torch.masked_select(x, x > 0.02)
    acc = acc + sel0.sum()
    x = x * 0.9 + 0.01
    idx1 = torch.nonzero(x > 0.05)
    acc = acc + idx1.sum() * 1e-3
    val1 = x.unique()
    acc = acc + val1.sum()
    sel1 = torch.masked_select(x, x > 0.02)
    acc = acc + sel1.sum()
    x = x * 0.9 + 0.01
    idx2 = torch.nonzero(x > 0.05)
    acc = acc + idx2.sum() * 1e-3
    val2 = x.unique()
    acc = acc + val2.sum()
    sel2 = torch.masked_select(x, x > 0.02)
    acc = acc + sel2.sum()
    x = x * 0.9 + 0.01
    idx3 = torch.nonzero(x > 0.05)
    acc = acc + idx3.sum() * 1e-3
    val3 = x.unique()
    acc = acc + val3.sum()
    sel3 = torch.masked_select(x, x > 0.02)
    acc = acc + sel3.sum()
    x = x * 0.9 + 0.01
    idx4 = torch.nonzero(x > 0.05)
    acc = acc + idx4.sum() * 1e-3
    val4 = x.unique()
    acc = acc + val4.sum()
    sel4 = torch.masked_select(x, x > 0.02)
    acc = acc + sel4.sum()
    return x.sum() + acc


compiled_forward = torch.compile(forward)
