from os.path import dirname, join

from bnpre.network import Network, read_network

TEST = dirname(__file__)
DATA = join(TEST, 'data')

ROOT = dirname(TEST)


def data_path(name: str) -> str:
    return join(DATA, name)


def load(name: str) -> Network:
    return read_network(data_path(name))


def read_text(name: str) -> str:
    with open(data_path(name), 'r', encoding='utf-8') as f:
        return f.read()
