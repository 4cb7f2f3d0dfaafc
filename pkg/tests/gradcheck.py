"""Central-difference gradient checking against the phase objectives."""

import numpy as np

from ccrec import objective as obj


def phase_gradient_max_error(phase, batch, state, eps=1e-6):
    """Worst relative error between analytic and central-difference grads.

    The frozen side is captured once so the numeric derivative sees the
    same stop-gradient objective the analytic path differentiates.
    """
    loss, grads = obj.phase_loss(phase, batch, state)
    frozen = obj.phase_frozen_rows(phase, batch, state)
    value = obj.phase_loss_value(phase, batch, state, frozen)
    assert abs(loss - value) < 1e-10, "phase_loss disagrees with its value function"

    if phase == obj.ITEM_TUTORING:
        targets = [(state.user0, grads["user0"])]
    else:
        targets = []
        for layer, (grad_w, grad_b) in enumerate(grads["adapter"]):
            targets.append((state.adapter.weights[layer], grad_w))
            targets.append((state.adapter.biases[layer], grad_b))

    worst = 0.0
    for array, grad in targets:
        it = np.nditer(array, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            old = array[ix]
            array[ix] = old + eps
            up = obj.phase_loss_value(phase, batch, state, frozen)
            array[ix] = old - eps
            down = obj.phase_loss_value(phase, batch, state, frozen)
            array[ix] = old
            fd = (up - down) / (2.0 * eps)
            worst = max(worst, abs(fd - grad[ix]) / max(1.0, abs(fd)))
    return worst
