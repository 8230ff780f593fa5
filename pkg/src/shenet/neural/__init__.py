from .autograd import Tensor, attention, backward, no_grad
from .losses import loss_cs, loss_tra
from .model import (
    ShenetConfig,
    ShenetParams,
    cross_modal_forward,
    encode_scene,
    encode_trajectory,
    expected_param_count,
    forward_offsets,
    init_params,
    load_checkpoint,
    offset_head,
    save_checkpoint,
)
from .optim import Adam, adam_update
