"""numpy reference kernels; the compiled module mirrors these signatures."""
import numpy as np


def _log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(w1, w2, state):
    hidden = np.tanh(w1 @ state)
    logp = _log_softmax(w2 @ hidden)
    return hidden, np.exp(logp)


def forward_batch(w1, w2, states):
    hidden = np.tanh(states @ w1.T)
    logp = _log_softmax(hidden @ w2.T)
    return hidden, np.exp(logp)


def loss_and_grad(w1, w2, states, actions, advantages, entropy_coef):
    """Loss = -mean(log pi(a|s) * A) - entropy_coef * mean(H(pi(.|s))) and its gradients."""
    b = states.shape[0]
    hidden = np.tanh(states @ w1.T)
    logp = _log_softmax(hidden @ w2.T)
    p = np.exp(logp)
    ent = -(p * logp).sum(axis=1)
    rows = np.arange(b)
    loss = -(logp[rows, actions] * advantages).mean() - entropy_coef * ent.mean()

    onehot = np.zeros_like(p)
    onehot[rows, actions] = 1.0
    g_logits = -advantages[:, None] * (onehot - p) + entropy_coef * p * (logp + ent[:, None])
    g_logits /= b
    g2 = g_logits.T @ hidden
    g_pre = (g_logits @ w2) * (1.0 - hidden * hidden)
    g1 = g_pre.T @ states
    return float(loss), float(ent.mean()), g1, g2


def adamw_step(param, grad, m, v, step, lr, beta1, beta2, eps, weight_decay):
    """In-place decoupled-weight-decay Adam update (``step`` counts from 1)."""
    param *= 1.0 - lr * weight_decay
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
