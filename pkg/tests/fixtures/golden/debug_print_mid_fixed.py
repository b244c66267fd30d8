import torch


@torch.compile
def fn(x):
    x = torch.relu(x)
    __gm_defer_0 = ("tensor:", x,)
    __gm_ret_0 = torch.sin(x)
    print(*__gm_defer_0)
    return __gm_ret_0
