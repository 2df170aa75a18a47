"""Real-text corpora for the depth experiments.

20 Newsgroups is used when scikit-learn already has it cached locally.
Otherwise the English news-article sample bundled with the ``tmtoolkit``
wheel stands in (3,824 articles from nine outlets, outlet as label).
"""
from __future__ import annotations

import csv
import importlib.util
import io
import zipfile
from pathlib import Path

import numpy as np


def _twenty_newsgroups():
    from sklearn.datasets import fetch_20newsgroups

    try:
        data = fetch_20newsgroups(subset="all", remove=("headers", "footers", "quotes"),
                                  download_if_missing=False)
    except OSError:
        return None
    return "20newsgroups", list(data.data), [int(y) for y in data.target]


def _news_articles():
    spec = importlib.util.find_spec("tmtoolkit")
    if spec is None or not spec.submodule_search_locations:
        return None
    path = Path(spec.submodule_search_locations[0]) / "data" / "en" / "NewsArticles.zip"
    if not path.exists():
        return None
    with zipfile.ZipFile(path) as zf:
        rows = list(csv.DictReader(io.TextIOWrapper(zf.open("NewsArticles.csv"), encoding="utf-8")))
    outlets = sorted({r["article_source_link"].split("/")[2] for r in rows})
    code = {o: i for i, o in enumerate(outlets)}
    texts = [f"{r['title']}\n{r['text']}" for r in rows]
    labels = [code[r["article_source_link"].split("/")[2]] for r in rows]
    return "news_articles", texts, labels


def load_text_corpus(prefer: str = "20newsgroups"):
    """(name, texts, labels) for the first available corpus."""
    loaders = [_twenty_newsgroups, _news_articles]
    if prefer == "news_articles":
        loaders.reverse()
    for loader in loaders:
        got = loader()
        if got is not None:
            return got
    raise FileNotFoundError(
        "no text corpus available: cache 20 Newsgroups with sklearn.datasets.fetch_20newsgroups() "
        "or `pip install --no-deps tmtoolkit`")


def subsample(texts, labels, n_docs: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(texts), size=min(n_docs, len(texts)), replace=False))
    return [texts[i] for i in idx], [labels[i] for i in idx]
