"""Event-aware seq2seq training and evaluation stack for crisis-message
classification, with a full cross-domain adaptation experiment harness.

The pipeline: crisis datasets are ingested and label-unified (`corpus`),
each message is wrapped into an event-aware question template (`prompt`),
tokenized against a corpus-derived vocabulary (`tokenizer`), and fed to a
small encoder-decoder transformer (`model`) built on a reverse-mode
autodiff engine (`tensor`). Training (`train`) follows a fixed recipe:
Adam at 5e-5 with linear warmup/decay and an effective batch of 16.
Evaluation (`evaluation`) produces accuracy / weighted-F1 reports,
source-by-target adaptation matrices, and Pearson row correlations.
"""

__version__ = "0.1.0"
