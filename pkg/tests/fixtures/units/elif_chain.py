import torch


def route(x):
    h = x * 2
    if h.sum() > 100:
        z = h + 1
    elif h.sum() > -100:
        z = h * 3
    else:
        z = h - 1
    return torch.relu(z)


route_c = torch.compile(route)
