"""Tests for the command line parser."""
import pytest

from cascade_router import __version__
from cascade_router.__main__ import main
from cascade_router.core import argument_parser


def test_subcommands():
    parser = argument_parser()
    for command in ('simulate', 'replay', 'sweep', 'label'):
        args = parser.parse_args([command])
        assert args.command == command


def test_command_is_required():
    parser = argument_parser()
    with pytest.raises(SystemExit):
        parser.parse_args([])


def test_common_options():
    parser = argument_parser()
    args = parser.parse_args(['replay', 'traces.jsonl', '-c', 'run.yaml', '-o', 'out', '--seed', '3',
                              '--alpha', '0.2', '--gamma', '1', '--overhead', 'fractional:0.1',
                              '--pool-remove', 'a1,a2', '-P', '-p', '4', '-v'])
    assert args.traces == 'traces.jsonl'
    assert args.config == 'run.yaml'
    assert args.out == 'out'
    assert args.seed == 3
    assert args.alpha == 0.2
    assert args.gamma == 1.0
    assert args.overhead == 'fractional:0.1'
    assert args.pool_remove == 'a1,a2'
    assert args.progress_bar is True
    assert args.parallel == 4
    assert args.verbose is True
    assert args.debug is False
    assert args.compare is False


def test_defaults_leave_config_alone():
    args = argument_parser().parse_args(['simulate'])
    assert args.seed is None
    assert args.alpha is None
    assert args.parallel is None
    assert args.overhead is None


def test_sweep_and_label_options():
    parser = argument_parser()
    args = parser.parse_args(['sweep', '--alphas', '0.2,0.8', '--traces', 'traces.jsonl'])
    assert args.alphas == '0.2,0.8'
    assert args.traces == 'traces.jsonl'

    args = parser.parse_args(['label', 'traces.jsonl', '--balance'])
    assert args.balance is True
    assert args.alphas is None

    args = parser.parse_args(['simulate', '--compare'])
    assert args.compare is True

    args = parser.parse_args(['replay', '--table2'])
    assert args.compare is True


def test_bad_values():
    parser = argument_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(['replay', '--seed', 'lots'])
    with pytest.raises(SystemExit):
        parser.parse_args(['garbage'])


def test_main_usage_error_exits_with_config_code():
    assert main(['replay', '--alpha', 'high']) == 1
    assert main([]) == 1


def test_main_version(capsys):
    assert main(['--version']) == 0
    assert __version__ in capsys.readouterr().out
