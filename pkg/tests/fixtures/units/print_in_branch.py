import torch


def noisy(x):
    z = x * 2
    if x.sum() > 0:
        print("positive path")
        z = z + 1
    else:
        z = z - 1
    return z


noisy_c = torch.compile(noisy)
