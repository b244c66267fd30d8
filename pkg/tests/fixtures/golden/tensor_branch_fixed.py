import torch


@torch.compile()
def f(x, y):
    x_1 = x*2
    y_1 = y*2
    __gm_pred_0 = x.sum() > 10
    __gm_then_z_0 = x_1 + y_1
    __gm_else_z_0 = x_1 * y_1
    z = torch.where(__gm_pred_0, __gm_then_z_0, __gm_else_z_0)
    return torch.relu(z)
