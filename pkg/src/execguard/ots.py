"""Lamport one-time signatures aggregated under a Merkle tree.

Conventions (all indices 1-based):

* ``h`` is the configured hash truncated to K bits, so tests can run at K=16.
* Leaf i's keys come from ``F(S || i) = H(u32 len(S) || S || u32 i)``; element
  ``b`` (0 = first, 1 = second) of pair ``j`` is
  ``h(u32 len(F) || F || u8 b || u32 j)``.
* Signing reveals the first element of pair j when bit j of h(m) is 1 and
  the second one when it is 0 (bits are taken MSB-first).
* A serialized public key is ``u16 K || x_1,0 || x_1,1 || ... || x_K,1``;
  a leaf hash is h(serialized key) and an inner node is h(left || right).
"""

from __future__ import annotations

import enum
import functools
import hashlib
import hmac
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

KEYFILE_MAGIC = b"HADESOTS1"


class OtsError(Exception):
    pass


class IndexOutOfRange(OtsError, IndexError):
    pass


class NotPowerOfTwo(OtsError, ValueError):
    pass


class MalformedSignature(OtsError, ValueError):
    pass


class MalformedPath(OtsError, ValueError):
    pass


class KeyFileError(OtsError, ValueError):
    pass


@dataclass(frozen=True)
class OtsParams:
    k: int = 256
    hash_name: str = "sha256"

    def __post_init__(self):
        full = hashlib.new(self.hash_name).digest_size * 8
        if self.k % 8 or not 8 <= self.k <= full:
            raise ValueError(f"K must be a multiple of 8 in [8, {full}], got {self.k}")

    @property
    def nbytes(self) -> int:
        return self.k // 8

    @functools.cached_property
    def _ctor(self):
        return getattr(hashlib, self.hash_name, None) or functools.partial(hashlib.new, self.hash_name)

    def full_hash(self, data: bytes) -> bytes:
        return self._ctor(data).digest()

    def h(self, data: bytes) -> bytes:
        return self._ctor(data).digest()[: self.nbytes]


DEFAULT_PARAMS = OtsParams()


def private_key_size(k: int) -> int:
    return 2 * k * k // 8


def signature_size(k: int) -> int:
    return k * k // 8


def merkle_signature_size(k: int, n: int) -> int:
    """Lamport signature plus the authentication path hashes, in bytes."""
    return (k * k + k * tree_height(n)) // 8


def tree_height(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise NotPowerOfTwo(f"leaf count must be a power of two, got {n}")
    return n.bit_length() - 1


def message_bits(params: OtsParams, message: bytes) -> list[int]:
    digest = params.h(message)
    return [(byte >> (7 - b)) & 1 for byte in digest for b in range(8)]


@dataclass(frozen=True)
class LamportPrivateKey:
    params: OtsParams
    pairs: tuple[tuple[bytes, bytes], ...]

    def to_bytes(self) -> bytes:
        return b"".join(a + b for a, b in self.pairs)

    @property
    def size_bytes(self) -> int:
        return len(self.to_bytes())


@dataclass(frozen=True)
class LamportPublicKey:
    params: OtsParams
    pairs: tuple[tuple[bytes, bytes], ...]

    def to_bytes(self) -> bytes:
        return struct.pack(">H", self.params.k) + b"".join(a + b for a, b in self.pairs)

    @property
    def size_bytes(self) -> int:
        return 2 * self.params.k * self.params.nbytes

    @classmethod
    def from_bytes(cls, blob: bytes, params: OtsParams = DEFAULT_PARAMS) -> "LamportPublicKey":
        if len(blob) < 2:
            raise MalformedSignature("truncated public key")
        (k,) = struct.unpack_from(">H", blob)
        if k != params.k:
            raise MalformedSignature(f"public key is for K={k}, expected {params.k}")
        w = params.nbytes
        body = blob[2:]
        if len(body) != 2 * k * w:
            raise MalformedSignature("public key has wrong length")
        elems = [body[p : p + w] for p in range(0, len(body), w)]
        return cls(params, tuple(zip(elems[0::2], elems[1::2])))


@dataclass(frozen=True)
class LamportSignature:
    params: OtsParams
    revealed: tuple[bytes, ...]

    def to_bytes(self) -> bytes:
        return b"".join(self.revealed)

    @property
    def size_bytes(self) -> int:
        return len(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes, params: OtsParams = DEFAULT_PARAMS) -> "LamportSignature":
        w = params.nbytes
        if len(blob) != params.k * w:
            raise MalformedSignature(f"signature must be {params.k * w} bytes, got {len(blob)}")
        return cls(params, tuple(blob[p : p + w] for p in range(0, len(blob), w)))


@functools.lru_cache(maxsize=None)
def _element_suffixes(k: int) -> tuple[bytes, ...]:
    return tuple(bytes([b]) + struct.pack(">I", j) for j in range(1, k + 1) for b in (0, 1))


def leaf_seed(seed: bytes, i: int, params: OtsParams = DEFAULT_PARAMS) -> bytes:
    """F(S || i)."""
    return params.full_hash(struct.pack(">I", len(seed)) + seed + struct.pack(">I", i))


def derive_leaf_keypair(
    seed: bytes, i: int, params: OtsParams = DEFAULT_PARAMS, n: int | None = None
) -> tuple[LamportPrivateKey, LamportPublicKey]:
    if i < 1 or (n is not None and i > n):
        raise IndexOutOfRange(f"leaf index {i} outside 1..{n if n is not None else 'N'}")
    fs = leaf_seed(seed, i, params)
    prefix = struct.pack(">I", len(fs)) + fs
    ctor, w = params._ctor, params.nbytes
    elems = [ctor(prefix + sfx).digest()[:w] for sfx in _element_suffixes(params.k)]
    pub = [ctor(x).digest()[:w] for x in elems]
    sk = LamportPrivateKey(params, tuple(zip(elems[0::2], elems[1::2])))
    pk = LamportPublicKey(params, tuple(zip(pub[0::2], pub[1::2])))
    return sk, pk


def lamport_sign(sk: LamportPrivateKey, message: bytes) -> LamportSignature:
    bits = message_bits(sk.params, message)
    return LamportSignature(sk.params, tuple(pair[0] if bit else pair[1] for pair, bit in zip(sk.pairs, bits)))


def lamport_verify(pk: LamportPublicKey, message: bytes, sig: LamportSignature) -> bool:
    params = pk.params
    if sig.params != params or len(sig.revealed) != params.k:
        raise MalformedSignature(f"expected {params.k} elements for K={params.k}")
    if any(len(x) != params.nbytes for x in sig.revealed):
        raise MalformedSignature("signature element has wrong width")
    bits = message_bits(params, message)
    ok = True
    for pair, bit, x in zip(pk.pairs, bits, sig.revealed):
        ok &= hmac.compare_digest(params.h(x), pair[0] if bit else pair[1])
    return ok


class Side(enum.Enum):
    LEFT = 0
    RIGHT = 1


@dataclass(frozen=True)
class PathNode:
    sibling: bytes
    side: Side  # where the sibling sits relative to the running hash


AuthPath = tuple[PathNode, ...]


def leaf_hash(pk: LamportPublicKey) -> bytes:
    return pk.params.h(pk.to_bytes())


def _levels(leaves: Sequence[bytes], params: OtsParams) -> list[list[bytes]]:
    tree_height(len(leaves))
    levels = [list(leaves)]
    while len(levels[-1]) > 1:
        cur = levels[-1]
        levels.append([params.h(cur[p] + cur[p + 1]) for p in range(0, len(cur), 2)])
    return levels


def _path_from_levels(levels: list[list[bytes]], i: int) -> AuthPath:
    n = len(levels[0])
    if not 1 <= i <= n:
        raise IndexOutOfRange(f"leaf index {i} outside 1..{n}")
    idx, path = i - 1, []
    for level in levels[:-1]:
        if idx % 2 == 0:
            path.append(PathNode(level[idx + 1], Side.RIGHT))
        else:
            path.append(PathNode(level[idx - 1], Side.LEFT))
        idx //= 2
    return tuple(path)


def merkle_root(leaf_public_keys: Sequence[LamportPublicKey]) -> bytes:
    if not leaf_public_keys:
        raise NotPowerOfTwo("no leaves")
    params = leaf_public_keys[0].params
    return _levels([leaf_hash(pk) for pk in leaf_public_keys], params)[-1][0]


def auth_path(leaf_public_keys: Sequence[LamportPublicKey], i: int) -> AuthPath:
    if not leaf_public_keys:
        raise NotPowerOfTwo("no leaves")
    params = leaf_public_keys[0].params
    return _path_from_levels(_levels([leaf_hash(pk) for pk in leaf_public_keys], params), i)


def fold_path(leaf: bytes, path: AuthPath, i: int, params: OtsParams = DEFAULT_PARAMS) -> bytes | None:
    """Hash ``leaf`` up ``path``; None if the sides disagree with leaf index ``i``."""
    if i < 1 or i > (1 << len(path)):
        return None
    idx, node = i - 1, leaf
    for pn in path:
        if len(pn.sibling) != params.nbytes:
            raise MalformedPath("path node has wrong width")
        expected = Side.RIGHT if idx % 2 == 0 else Side.LEFT
        if pn.side is not expected:
            return None
        node = params.h(node + pn.sibling) if pn.side is Side.RIGHT else params.h(pn.sibling + node)
        idx //= 2
    return node


def merkle_verify(
    root: bytes,
    message: bytes,
    sig: LamportSignature,
    pk: LamportPublicKey,
    path: AuthPath,
    i: int,
) -> bool:
    if not lamport_verify(pk, message, sig):
        return False
    derived = fold_path(leaf_hash(pk), path, i, pk.params)
    return derived is not None and hmac.compare_digest(derived, root)


@dataclass(frozen=True)
class MerkleSignature:
    leaf_index: int
    public_key: LamportPublicKey
    signature: LamportSignature
    path: AuthPath

    @property
    def size_bytes(self) -> int:
        """Transmitted signature size: revealed elements plus path hashes."""
        return self.signature.size_bytes + sum(len(pn.sibling) for pn in self.path)

    def verify(self, root: bytes, message: bytes) -> bool:
        return merkle_verify(root, message, self.signature, self.public_key, self.path, self.leaf_index)


@dataclass
class MerkleKeys:
    """Owner-side key material: the seed, leaf count and (lazily) the full tree."""

    seed: bytes
    n: int
    params: OtsParams = DEFAULT_PARAMS
    _levels: list[list[bytes]] | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        tree_height(self.n)
        if not self.seed:
            raise ValueError("seed must be non-empty")

    def keypair(self, i: int) -> tuple[LamportPrivateKey, LamportPublicKey]:
        return derive_leaf_keypair(self.seed, i, self.params, self.n)

    @property
    def levels(self) -> list[list[bytes]]:
        if self._levels is None:
            leaves = [leaf_hash(self.keypair(i)[1]) for i in range(1, self.n + 1)]
            self._levels = _levels(leaves, self.params)
        return self._levels

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    def auth_path(self, i: int) -> AuthPath:
        return _path_from_levels(self.levels, i)

    def sign(self, i: int, message: bytes) -> MerkleSignature:
        sk, pk = self.keypair(i)
        return MerkleSignature(i, pk, lamport_sign(sk, message), self.auth_path(i))

    def save(self, fh: BinaryIO) -> None:
        fh.write(KEYFILE_MAGIC)
        fh.write(struct.pack(">HI", self.params.k, self.n))
        fh.write(struct.pack(">I", len(self.seed)) + self.seed)

    @classmethod
    def load(cls, fh: BinaryIO, hash_name: str = "sha256") -> "MerkleKeys":
        blob = fh.read()
        if not blob.startswith(KEYFILE_MAGIC):
            raise KeyFileError("bad key file magic")
        pos = len(KEYFILE_MAGIC)
        try:
            k, n = struct.unpack_from(">HI", blob, pos)
            (slen,) = struct.unpack_from(">I", blob, pos + 6)
        except struct.error as exc:
            raise KeyFileError("truncated key file") from exc
        seed = blob[pos + 10 : pos + 10 + slen]
        if len(seed) != slen or pos + 10 + slen != len(blob):
            raise KeyFileError("key file seed length mismatch")
        try:
            return cls(seed, n, OtsParams(k, hash_name))
        except ValueError as exc:
            raise KeyFileError(str(exc)) from exc
