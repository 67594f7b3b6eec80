"""
Command-line front end of medimark.

Every command reads its key from the ``MEDIMARK_KEY`` environment variable or
from ``--key-file``; keys are never accepted as arguments. Results are printed
as JSON on standard output, diagnostics go to standard error, and output
files are written through a temporary file and a rename.

Exit codes:

== ==================================================
0  success, or the image verified intact
2  usage error (bad arguments, missing key, nothing to locate)
3  the image was tampered with
4  no watermark found, or the payload could not be read
5  input/output, embedding or store error
== ==================================================
"""
import argparse
import json
import math
import sys

import numpy as np

import medimark.logging_utils as logging
from medimark import __version__
from medimark.errors import (
    InvalidKey,
    MedimarkError,
    MissingKey,
    NothingToLocate,
    NotWatermarked,
    PayloadUnreadable,
)
from medimark.imagecore import (
    PixelGrid,
    RoiRect,
    atomic_write_bytes,
    load_pgm,
    psnr,
    save_pgm,
)
from medimark.payload import KEY_ENV_VAR, SecretKey, parse_record
from medimark.report import TamperStatus
from medimark.store import Store
from medimark.watermark import (
    EmbedParams,
    capacity,
    embed,
    extract,
    locate,
    payload_bits,
    verify,
)

logger = logging.get_logger(__name__)

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TAMPERED = 3
EXIT_UNREADABLE = 4
EXIT_FAILURE = 5

_STATUS_EXIT = {
    TamperStatus.INTACT: EXIT_OK,
    TamperStatus.TAMPERED: EXIT_TAMPERED,
    TamperStatus.PAYLOAD_UNREADABLE: EXIT_UNREADABLE,
    TamperStatus.NOT_WATERMARKED: EXIT_UNREADABLE,
}


def _exit_code(err):
    if isinstance(err, (MissingKey, InvalidKey, NothingToLocate)):
        return EXIT_USAGE
    if isinstance(err, (NotWatermarked, PayloadUnreadable)):
        return EXIT_UNREADABLE
    return EXIT_FAILURE


def _print_json(obj):
    print(json.dumps(obj, indent=2, ensure_ascii=False))


# --------------------------------- helpers ----------------------------------


def _roi_arg(text):
    try:
        return RoiRect.parse(text)
    except (TypeError, ValueError) as err:
        raise argparse.ArgumentTypeError(str(err))


def _param_arg(name):
    """
    argparse type for one ``EmbedParams`` option, checked with the same rules
    as the library.
    """

    def parse(text):
        try:
            value = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError("not a number: {!r}".format(text))
        try:
            EmbedParams.from_options({name: value})
        except MedimarkError as err:
            raise argparse.ArgumentTypeError(str(err))
        return value

    return parse


def _load_key(args):
    if args.key_file:
        return SecretKey.from_file(args.key_file)
    return SecretKey.from_env(KEY_ENV_VAR)


def _load_record(path):
    with open(path, "rb") as fh:
        return parse_record(fh.read())


def _embed_params(args):
    return EmbedParams.from_options(
        {
            key: value
            for key, value in (
                ("scale", getattr(args, "scale", None)),
                ("sigma", args.sigma),
                ("t_rel", args.trel),
            )
            if value is not None
        }
    )


def _finite_or_none(value):
    return value if math.isfinite(value) else None


def _report_exit(report, args):
    if getattr(args, "report", None):
        report.dump(args.report)
    _print_json(report.to_dict())
    return _STATUS_EXIT[report.status]


# -------------------------------- commands ----------------------------------


def cmd_embed(args):
    key = _load_key(args)
    params = _embed_params(args)
    image = load_pgm(args.image)
    record = _load_record(args.patient)
    out = embed(image, args.roi, record, key, params)
    save_pgm(args.out, out)
    _print_json(
        {
            "out": str(args.out),
            "payloadBits": payload_bits(record, image.width, image.height, params.scale),
            "capacityBits": capacity(image.width, image.height, args.roi, params.scale),
            "scale": params.scale,
            "psnr": _finite_or_none(psnr(image, out)),
        }
    )
    return EXIT_OK


def cmd_verify(args):
    key = _load_key(args)
    report = verify(load_pgm(args.image), key, _embed_params(args))
    return _report_exit(report, args)


def cmd_locate(args):
    key = _load_key(args)
    image = load_pgm(args.image)
    location = locate(image, key, _embed_params(args))
    save_pgm(args.mask_out, PixelGrid(location.mask.bits * np.uint8(255)))
    _print_json(
        {
            "mask": str(args.mask_out),
            "regions": [r.to_dict() for r in location.regions],
            "report": location.report.to_dict(),
        }
    )
    return EXIT_OK


def cmd_extract(args):
    key = _load_key(args)
    extraction = extract(load_pgm(args.image), key, _embed_params(args))
    _print_json(extraction.record)
    return EXIT_OK


def cmd_keygen(args):
    key = SecretKey.generate()
    if args.out:
        atomic_write_bytes(args.out, (key.hex() + "\n").encode("ascii"))
        _print_json({"keyFile": str(args.out)})
    else:
        print(key.hex())
    return EXIT_OK


def cmd_store_ingest(args):
    key = _load_key(args)
    params = _embed_params(args)
    record = _load_record(args.patient)
    record_id = Store(args.store).ingest(
        load_pgm(args.image),
        args.roi,
        record,
        key,
        params,
        archive_original=not args.no_archive,
    )
    _print_json({"id": record_id})
    return EXIT_OK


def cmd_store_get(args):
    save_pgm(args.out, Store(args.store).fetch(args.id))
    _print_json({"id": args.id, "out": str(args.out)})
    return EXIT_OK


def cmd_store_get_original(args):
    save_pgm(args.out, Store(args.store).fetch_original(args.id))
    _print_json({"id": args.id, "out": str(args.out)})
    return EXIT_OK


def cmd_store_list(args):
    _print_json([entry.to_dict() for entry in Store(args.store).list()])
    return EXIT_OK


def cmd_store_verify(args):
    key = _load_key(args)
    report = Store(args.store).verify(args.id, key, _embed_params(args))
    return _report_exit(report, args)


# --------------------------------- parser -----------------------------------


def build_parser():
    key_opts = argparse.ArgumentParser(add_help=False)
    key_opts.add_argument(
        "--key-file",
        help="file holding the 64 hex character key "
        "(default: the {} environment variable)".format(KEY_ENV_VAR),
    )

    verifier_opts = argparse.ArgumentParser(add_help=False)
    verifier_opts.add_argument(
        "--sigma", type=_param_arg("sigma"), help="LoG sigma (default 2.0)"
    )
    verifier_opts.add_argument(
        "--trel",
        type=_param_arg("t_rel"),
        help="relative edge threshold in [0, 1] (default 0.04)",
    )

    embed_opts = argparse.ArgumentParser(add_help=False, parents=[verifier_opts])
    embed_opts.add_argument("--image", required=True, help="original PGM image")
    embed_opts.add_argument("--roi", required=True, type=_roi_arg, metavar="X,Y,W,H")
    embed_opts.add_argument(
        "--patient", required=True, help="JSON object of patient data strings"
    )
    embed_opts.add_argument("--scale", type=int, choices=(2, 4))

    ap = argparse.ArgumentParser(
        prog="medimark",
        description="Fragile watermarking of grayscale medical images.",
    )
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument(
        "-v", "--verbose", action="count", default=0, help="more log output"
    )
    sp = ap.add_subparsers(dest="command", metavar="command")
    sp.required = True

    p = sp.add_parser(
        "embed", parents=[key_opts, embed_opts], help="watermark an image"
    )
    p.add_argument("--out", required=True, help="watermarked PGM to write")
    p.set_defaults(func=cmd_embed)

    p = sp.add_parser(
        "verify", parents=[key_opts, verifier_opts], help="check image integrity"
    )
    p.add_argument("--image", required=True)
    p.add_argument("--report", help="also write the JSON report to this file")
    p.set_defaults(func=cmd_verify)

    p = sp.add_parser(
        "locate", parents=[key_opts, verifier_opts], help="write a tamper mask"
    )
    p.add_argument("--image", required=True)
    p.add_argument("--mask-out", required=True, help="mask PGM (0 clean, 255 tampered)")
    p.set_defaults(func=cmd_locate)

    p = sp.add_parser(
        "extract", parents=[key_opts, verifier_opts], help="print the patient record"
    )
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_extract)

    p = sp.add_parser("keygen", help="generate a new random key")
    p.add_argument("--out", help="write the key to this file instead of stdout")
    p.set_defaults(func=cmd_keygen)

    p = sp.add_parser("store", help="record store operations")
    ssp = p.add_subparsers(dest="store_command", metavar="store_command")
    ssp.required = True

    q = ssp.add_parser("ingest", parents=[key_opts, embed_opts])
    q.add_argument("--store", required=True)
    q.add_argument("--no-archive", action="store_true", help="do not keep the original")
    q.set_defaults(func=cmd_store_ingest)

    q = ssp.add_parser("get")
    q.add_argument("--store", required=True)
    q.add_argument("--id", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_store_get)

    q = ssp.add_parser("get-original")
    q.add_argument("--store", required=True)
    q.add_argument("--id", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_store_get_original)

    q = ssp.add_parser("list")
    q.add_argument("--store", required=True)
    q.set_defaults(func=cmd_store_list)

    q = ssp.add_parser("verify", parents=[key_opts, verifier_opts])
    q.add_argument("--store", required=True)
    q.add_argument("--id", required=True)
    q.add_argument("--report", help="also write the JSON report to this file")
    q.set_defaults(func=cmd_store_verify)

    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.set_log_level(logging.DEBUG if args.verbose > 1 else logging.INFO)
    logger.debug("running command %s", args.command)
    try:
        return args.func(args)
    except (MedimarkError, OSError) as err:
        code = _exit_code(err)
        print(
            "medimark: {}: {}".format(type(err).__name__, err),
            file=sys.stderr,
        )
        return code


if __name__ == "__main__":
    sys.exit(main())
