import torch


def split(x, flag):
    y = torch.relu(x)
    __gm_defer_0 = ("mid", 1,)
    if flag:
        __gm_ret_0 = y * 2
        print(*__gm_defer_0)
        return __gm_ret_0
    __gm_ret_1 = y + 1
    print(*__gm_defer_0)
    return __gm_ret_1


split_c = torch.compile(split)
