# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

from molpretrain.args import add_common_arguments, non_negative_int
from molpretrain.exceptions import GradientCheckFailed
from molpretrain.gradcheck import model_check, op_suite
from molpretrain.logger import logger


def check_gradients(args, config):
    failures = []
    for name, report in op_suite(config.seed).items():
        logger.info("%-16s max relative error %.2e", name, report.max_rel_error)
        if report.max_rel_error > args.tol:
            failures.append(name)

    max_coords = None if args.max_coords == 0 else args.max_coords
    if max_coords is not None:
        logger.warning(
            "model check sampled: at most %s coordinates per parameter tensor",
            max_coords,
        )
    report = model_check(
        config.model_config(),
        h=args.h,
        tol=args.tol,
        max_coords=max_coords,
        seed=config.seed,
    )
    for name, error in report.per_tensor.items():
        logger.debug("%-28s %.2e", name, error)
        if error > args.tol:
            failures.append(name)
    logger.info(
        "model: %s coordinates, max relative error %.2e",
        report.coordinates,
        report.max_rel_error,
    )

    if failures:
        raise GradientCheckFailed(
            f"gradients disagree above {args.tol:g}: {', '.join(failures)}"
        )
    logger.info("all gradients agree within %g", args.tol)


def add_parser(parser):
    gradcheck_parser = parser.add_parser(
        "gradcheck", help="Compare analytic gradients with finite differences."
    )
    gradcheck_parser.add_argument(
        "--tol", type=float, default=1e-4, help="relative error bound (default: 1e-4)"
    )
    gradcheck_parser.add_argument(
        "--delta",
        dest="h",
        type=float,
        default=1e-6,
        help="central difference step (default: 1e-6)",
    )
    gradcheck_parser.add_argument(
        "--max-coords",
        dest="max_coords",
        type=non_negative_int,
        default=0,
        help="check only this many sampled coordinates per parameter tensor "
        "(default: 0, every coordinate)",
    )
    add_common_arguments(gradcheck_parser)
    gradcheck_parser.set_defaults(func=check_gradients)
