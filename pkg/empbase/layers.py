# empbase/layers.py
"""
This module implements the parameter store and the transformer building
blocks the encoders and decoders are composed of.

Blocks register their parameters in a shared `ParameterStore` under
dotted names when they are constructed, and are called like functions on
`TensorValue` inputs afterwards. Layers follow the pre-norm arrangement
with a final layer norm per stack.
"""
from collections import OrderedDict
import logging
import math

import numpy as np

from . import tensor as T
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)


class ParameterStore(object):
    """
    This class holds every trainable tensor under a unique name.

    Default:
        ParameterStore(rng=None)

    Args:
        rng: (numpy.random.Generator : None) : the generator initial
            values are drawn from
    """

    def __init__(self, rng=None):
        self._params = OrderedDict()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.frozen = False

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, prefix=None):
        if prefix is None:
            return list(self._params)
        return [name for name in self._params if name.startswith(prefix)]

    def add(self, name, shape, init="xavier", scale=0.1, value=None):
        """add

        Register a parameter.

        Default:
            add(name, shape, init="xavier", scale=0.1, value=None)

        Args:
            name: (str) : unique dotted name
            shape: (tuple) : parameter shape
            init: (str) : one of xavier, uniform, zeros, ones
            scale: (float) : bound for uniform init
            value: (array : None) : explicit initial value

        Returns:
            param (TensorValue)
        """
        if self.frozen:
            raise ConfigError(
                f"parameter {name} registered after training started"
            )
        if name in self._params:
            raise ConfigError(f"duplicate parameter name: {name}")
        shape = tuple(int(dim) for dim in shape)
        if value is not None:
            data = np.array(value, dtype=T.DTYPE).reshape(shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        elif init == "uniform":
            data = self.rng.uniform(-scale, scale, size=shape)
        elif init == "xavier":
            fan_in, fan_out = shape[0], shape[-1]
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            data = self.rng.uniform(-bound, bound, size=shape)
        else:
            raise ConfigError(f"unknown init {init} for {name}")
        param = T.TensorValue(data, requires_grad=True, name=name)
        self._params[name] = param
        return param

    def zero_grad(self):
        for param in self._params.values():
            param.zero_grad()

    def parameter_count(self):
        return int(sum(param.size for param in self._params.values()))

    def grad_norm(self, prefix=None):
        total = 0.0
        for name in self.names(prefix):
            grad = self._params[name].grad
            if grad is not None:
                total += float((grad * grad).sum())
        return math.sqrt(total)

    def state_dict(self):
        return OrderedDict(
            (name, param.data.copy()) for name, param in self._params.items()
        )

    def load_state_dict(self, state, strict=True):
        """load_state_dict

        Copy arrays into the registered parameters.

        Args:
            state: (dict) : name -> array
            strict: (bool) : the name sets must match exactly
        """
        missing = set(self._params) - set(state)
        unexpected = set(state) - set(self._params)
        if strict and (missing or unexpected):
            raise DataError(
                "checkpoint parameters do not match the model: "
                f"missing {sorted(missing)}, unexpected {sorted(unexpected)}"
            )
        for name, value in state.items():
            if name not in self._params:
                continue
            param = self._params[name]
            if tuple(value.shape) != param.shape:
                raise DataError(
                    f"parameter {name}: checkpoint shape {value.shape} "
                    f"vs model shape {param.shape}"
                )
            param.data = np.array(value, dtype=T.DTYPE)
            param.zero_grad()


def positional_encoding(length, dim):
    """
    Fixed sinusoidal position table.

    Args:
        length: (int) : number of positions
        dim: (int) : feature dimension

    Returns:
        table (array) : length × dim
    """
    positions = np.arange(length)[:, None]
    rates = np.exp(-math.log(10000.0) * (2 * (np.arange(dim) // 2)) / dim)
    angles = positions * rates[None, :]
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return table


class Linear(object):
    """
    Affine map x W + b.

    Default:
        Linear(store, name, d_in, d_out, bias=True, init="xavier")
    """

    def __init__(self, store, name, d_in, d_out, bias=True, init="xavier"):
        self.weight = store.add(f"{name}.weight", (d_in, d_out), init=init)
        self.bias = None
        if bias:
            self.bias = store.add(f"{name}.bias", (d_out,), init="zeros")

    def __call__(self, x):
        out = T.matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class LayerNorm(object):
    def __init__(self, store, name, dim, eps=1e-6):
        self.gain = store.add(f"{name}.gain", (dim,), init="ones")
        self.bias = store.add(f"{name}.bias", (dim,), init="zeros")
        self.eps = eps

    def __call__(self, x):
        centered = x - T.reduce_mean(x, axis=-1, keepdims=True)
        var = T.reduce_mean(centered * centered, axis=-1, keepdims=True)
        scaled = centered * T.power(var + self.eps, -0.5)
        return scaled * self.gain + self.bias


class MultiHeadAttention(object):
    """
    Scaled dot-product attention over several heads.

    Default:
        MultiHeadAttention(
            store, name, dim, heads, memory_dim=None, zero_output=False
        )

    Args:
        store: (ParameterStore) : where parameters are registered
        name: (str) : parameter name prefix
        dim: (int) : query/output dimension; must divide by heads
        heads: (int) : number of heads
        memory_dim: (int : None) : key/value source dimension
        zero_output: (bool) : start the output projection at zero, so a
            residual block around it begins as the identity
    """

    def __init__(
        self, store, name, dim, heads, memory_dim=None, zero_output=False
    ):
        if heads < 1 or dim % heads != 0:
            raise ConfigError(
                f"{name}: dimension {dim} is not divisible by {heads} heads"
            )
        memory_dim = dim if memory_dim is None else memory_dim
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.query = Linear(store, f"{name}.query", dim, dim, bias=False)
        self.key = Linear(store, f"{name}.key", memory_dim, dim, bias=False)
        self.value = Linear(
            store, f"{name}.value", memory_dim, dim, bias=False
        )
        self.output = Linear(
            store,
            f"{name}.output",
            dim,
            dim,
            bias=False,
            init="zeros" if zero_output else "xavier",
        )
        self.last_weights = None

    def _split(self, x):
        batch, length, _ = x.shape
        x = x.reshape(batch, length, self.heads, self.head_dim)
        return x.transpose(0, 2, 1, 3)

    def __call__(self, query, memory, key_mask=None, causal=False):
        """
        Args:
            query: (TensorValue) : B×Lq×dim
            memory: (TensorValue) : B×Lk×memory_dim
            key_mask: (array : None) : B×Lk booleans, False keys are
                never attended to
            causal: (bool) : position t attends to keys <= t only

        Returns:
            (TensorValue) : B×Lq×dim
        """
        batch, q_len, _ = query.shape
        k_len = memory.shape[1]
        q = self._split(self.query(query))
        k = self._split(self.key(memory))
        v = self._split(self.value(memory))

        scores = T.matmul(q, T.swap_last(k)) / math.sqrt(self.head_dim)
        allowed = np.ones((batch, 1, q_len, k_len), dtype=bool)
        if key_mask is not None:
            allowed = allowed & np.asarray(key_mask, dtype=bool)[
                :, None, None, :
            ]
        if causal:
            allowed = allowed & np.tril(np.ones((q_len, k_len), dtype=bool))
        weights = T.softmax(scores, axis=-1, mask=allowed)
        self.last_weights = weights.data

        context = T.matmul(weights, v).transpose(0, 2, 1, 3)
        context = context.reshape(batch, q_len, self.dim)
        return self.output(context)


class FeedForward(object):
    def __init__(self, store, name, dim, hidden, zero_output=False):
        self.inner = Linear(store, f"{name}.inner", dim, hidden)
        self.outer = Linear(
            store,
            f"{name}.outer",
            hidden,
            dim,
            init="zeros" if zero_output else "xavier",
        )

    def __call__(self, x):
        return self.outer(T.relu(self.inner(x)))


class EncoderLayer(object):
    def __init__(self, store, name, dim, heads, hidden, dropout, rng):
        self.attention_norm = LayerNorm(store, f"{name}.attention_norm", dim)
        self.attention = MultiHeadAttention(
            store, f"{name}.attention", dim, heads
        )
        self.ffn_norm = LayerNorm(store, f"{name}.ffn_norm", dim)
        self.ffn = FeedForward(store, f"{name}.ffn", dim, hidden)
        self.dropout = dropout
        self.rng = rng

    def __call__(self, x, pad_mask):
        normed = self.attention_norm(x)
        x = x + T.dropout(
            self.attention(normed, normed, key_mask=pad_mask),
            self.dropout,
            self.rng,
        )
        x = x + T.dropout(self.ffn(self.ffn_norm(x)), self.dropout, self.rng)
        return x


class DecoderLayer(object):
    def __init__(self, store, name, dim, heads, hidden, dropout, rng):
        self.self_norm = LayerNorm(store, f"{name}.self_norm", dim)
        self.self_attention = MultiHeadAttention(
            store, f"{name}.self_attention", dim, heads
        )
        self.cross_norm = LayerNorm(store, f"{name}.cross_norm", dim)
        self.cross_attention = MultiHeadAttention(
            store, f"{name}.cross_attention", dim, heads
        )
        self.ffn_norm = LayerNorm(store, f"{name}.ffn_norm", dim)
        self.ffn = FeedForward(store, f"{name}.ffn", dim, hidden)
        self.dropout = dropout
        self.rng = rng

    def __call__(self, y, memory, target_mask, memory_mask):
        normed = self.self_norm(y)
        y = y + T.dropout(
            self.self_attention(
                normed, normed, key_mask=target_mask, causal=True
            ),
            self.dropout,
            self.rng,
        )
        y = y + T.dropout(
            self.cross_attention(
                self.cross_norm(y), memory, key_mask=memory_mask
            ),
            self.dropout,
            self.rng,
        )
        y = y + T.dropout(self.ffn(self.ffn_norm(y)), self.dropout, self.rng)
        return y


class TransformerEncoder(object):
    """
    A stack of encoder layers followed by a layer norm.

    Default:
        TransformerEncoder(
            store, name, dim, heads, hidden, layers=1, dropout=0.0, rng=None
        )

    Calling it with (x: B×L×dim, pad_mask: B×L) returns B×L×dim; padded
    positions are never attended to.
    """

    def __init__(
        self, store, name, dim, heads, hidden, layers=1, dropout=0.0, rng=None
    ):
        self.layers = [
            EncoderLayer(
                store, f"{name}.layer{index}", dim, heads, hidden, dropout, rng
            )
            for index in range(layers)
        ]
        self.norm = LayerNorm(store, f"{name}.norm", dim)

    def __call__(self, x, pad_mask):
        for layer in self.layers:
            x = layer(x, pad_mask)
        return self.norm(x)


class TransformerDecoder(object):
    """
    A stack of decoder layers followed by a layer norm.

    Calling it with (y: B×T×dim, memory: B×L×dim, target_mask: B×T,
    memory_mask: B×L) returns B×T×dim. Self-attention is causal, so
    step t never sees target tokens after t.
    """

    def __init__(
        self, store, name, dim, heads, hidden, layers=1, dropout=0.0, rng=None
    ):
        self.layers = [
            DecoderLayer(
                store, f"{name}.layer{index}", dim, heads, hidden, dropout, rng
            )
            for index in range(layers)
        ]
        self.norm = LayerNorm(store, f"{name}.norm", dim)

    def __call__(self, y, memory, target_mask, memory_mask):
        for layer in self.layers:
            y = layer(y, memory, target_mask, memory_mask)
        return self.norm(y)
