"""
This module frames the data carried by a watermark: the patient record, the
moment signature and the scrambled edge map are serialized into one
plaintext guarded by a CRC-32 trailer, which is then encrypted with AES-256
in counter mode.

Plaintext layout (all integers big-endian)::

    u16 record length | record | 64 byte signature | packed map | u32 crc32
"""
import binascii
import json
import os
import struct
import zlib

from Crypto.Cipher import AES
from Crypto.Random import get_random_bytes

import medimark.logging_utils as logging
from medimark.errors import (
    CrcMismatch,
    InvalidKey,
    MalformedPayload,
    MalformedRecord,
    MissingKey,
    RecordTooLarge,
)
from medimark.feature import MomentSignature
from medimark.scramble import PaddedMap

logger = logging.get_logger(__name__)

__all__ = [
    "KEY_ENV_VAR",
    "NONCE_SIZE",
    "SecretKey",
    "serialize_record",
    "parse_record",
    "build_plaintext",
    "parse_plaintext",
    "plaintext_size",
    "encrypt",
    "decrypt",
]

KEY_ENV_VAR = "MEDIMARK_KEY"
KEY_SIZE = 32
NONCE_SIZE = 16
MAX_RECORD_BYTES = 0xFFFF

_LEN = struct.Struct(">H")
_CRC = struct.Struct(">I")


class SecretKey:
    """
    AES-256 key of exactly 32 octets.

    The key material is never included in ``repr`` or ``str``.
    """

    def __init__(self, key_bytes):
        key_bytes = bytes(key_bytes)
        if len(key_bytes) != KEY_SIZE:
            raise InvalidKey(
                "a secret key has {} octets, got {}".format(KEY_SIZE, len(key_bytes))
            )
        self._key = key_bytes

    @classmethod
    def from_hex(cls, text):
        """
        Parse a key written as 64 hexadecimal characters. Surrounding
        whitespace is ignored.
        """
        text = str(text).strip()
        if len(text) != 2 * KEY_SIZE:
            raise InvalidKey(
                "a secret key is written as {} hex characters".format(2 * KEY_SIZE)
            )
        try:
            return cls(binascii.unhexlify(text))
        except (binascii.Error, ValueError):
            raise InvalidKey("secret key contains non-hex characters") from None

    @classmethod
    def from_env(cls, name=KEY_ENV_VAR, environ=None):
        environ = os.environ if environ is None else environ
        value = environ.get(name)
        if not value:
            raise MissingKey(
                "no key found: set {} to 64 hex characters or pass a key file".format(
                    name
                )
            )
        return cls.from_hex(value)

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="ascii", errors="replace") as fh:
            return cls.from_hex(fh.read())

    @classmethod
    def generate(cls):
        return cls(get_random_bytes(KEY_SIZE))

    @property
    def key_bytes(self):
        return self._key

    def hex(self):
        return self._key.hex()

    def __eq__(self, other):
        if not isinstance(other, SecretKey):
            return NotImplemented
        return self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return "SecretKey(<hidden>)"

    __str__ = __repr__


# ---------------------------------- records ---------------------------------


def _check_record(record):
    if not isinstance(record, dict):
        raise MalformedRecord("a patient record must be a mapping of strings")
    for key, value in record.items():
        if not isinstance(key, str) or not key:
            raise MalformedRecord("record keys must be non-empty strings")
        if not isinstance(value, str):
            raise MalformedRecord("value of record key {!r} is not a string".format(key))


def serialize_record(record):
    """
    Canonical JSON form of a patient record: keys sorted, no insignificant
    whitespace, UTF-8.

    Parameters
    ----------
    record : dict of str to str

    Returns
    -------
    data : bytes
        At most 65535 bytes.
    """
    _check_record(record)
    data = json.dumps(
        record, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")
    if len(data) > MAX_RECORD_BYTES:
        raise RecordTooLarge(
            "serialized record has {} bytes, limit is {}".format(
                len(data), MAX_RECORD_BYTES
            )
        )
    return data


def _unique_pairs(pairs):
    record = {}
    for key, value in pairs:
        if key in record:
            raise MalformedRecord("duplicate record key {!r}".format(key))
        record[key] = value
    return record


def parse_record(data):
    """
    Inverse of :func:`serialize_record`.
    """
    try:
        record = json.loads(bytes(data).decode("utf-8"), object_pairs_hook=_unique_pairs)
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise MalformedRecord("record is not valid UTF-8 JSON: {}".format(err)) from None
    _check_record(record)
    return record


# --------------------------------- plaintext --------------------------------


def plaintext_size(record_len, map_width, map_height):
    """
    Length in bytes of a plaintext holding a record of ``record_len`` bytes
    and a map of ``map_width`` x ``map_height`` cells before padding.
    """
    return (
        _LEN.size
        + record_len
        + MomentSignature.SIZE
        + PaddedMap.packed_size(map_width, map_height)
        + _CRC.size
    )


def build_plaintext(record, signature, padded):
    """
    Assemble the plaintext carried by a watermark.

    Parameters
    ----------
    record : dict of str to str
        Patient record.

    signature : :class:`medimark.feature.MomentSignature`

    padded : :class:`medimark.scramble.PaddedMap`
        Scrambled edge map.

    Returns
    -------
    plaintext : bytes
    """
    rec = serialize_record(record)
    body = _LEN.pack(len(rec)) + rec + signature.to_bytes() + padded.packed()
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def parse_plaintext(data, map_width, map_height, scale=1):
    """
    Split a plaintext into ``(record, signature, padded_map)``.

    The CRC trailer is checked first, so a wrong key or damaged payload is
    reported as :class:`medimark.errors.CrcMismatch`.
    """
    data = bytes(data)
    if len(data) < _LEN.size + _CRC.size:
        raise MalformedPayload("plaintext too short ({} bytes)".format(len(data)))
    body, trailer = data[: -_CRC.size], data[-_CRC.size :]
    (stored,) = _CRC.unpack(trailer)
    if zlib.crc32(body) & 0xFFFFFFFF != stored:
        raise CrcMismatch("payload checksum does not match")

    (rec_len,) = _LEN.unpack_from(body)
    expected = plaintext_size(rec_len, map_width, map_height)
    if len(data) != expected:
        raise MalformedPayload(
            "plaintext has {} bytes, layout needs {}".format(len(data), expected)
        )
    pos = _LEN.size
    record = parse_record(body[pos : pos + rec_len])
    pos += rec_len
    try:
        signature = MomentSignature.from_bytes(body[pos : pos + MomentSignature.SIZE])
    except ValueError as err:
        raise MalformedPayload("bad moment signature: {}".format(err)) from None
    pos += MomentSignature.SIZE
    padded = PaddedMap.from_packed(body[pos:], map_width, map_height, scale)
    return record, signature, padded


# ---------------------------------- cipher ----------------------------------


def _cipher(key, nonce):
    nonce = bytes(nonce)
    if len(nonce) != NONCE_SIZE:
        raise ValueError("nonce must be {} octets".format(NONCE_SIZE))
    # the whole 16-byte nonce is the initial counter block
    return AES.new(key.key_bytes, AES.MODE_CTR, nonce=b"", initial_value=nonce)


def encrypt(plain, key, nonce):
    """
    AES-256-CTR encryption. The counter block starts at ``nonce`` read as a
    128-bit big-endian integer and is incremented once per 16-byte block.
    """
    return _cipher(key, nonce).encrypt(bytes(plain))


def decrypt(cipher, key, nonce):
    """
    Inverse of :func:`encrypt`. Errors are not detectable at this layer;
    callers check the CRC of the plaintext.
    """
    return _cipher(key, nonce).decrypt(bytes(cipher))
