import pytest

_acceptance_results: list[tuple[str, bool]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.get_closest_marker("acceptance") is None:
        return
    if report.when == "call":
        _acceptance_results.append((item.name, report.passed))
    elif report.when == "setup" and report.failed:
        _acceptance_results.append((item.name, False))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in _acceptance_results:
        terminalreporter.write_line(f"ACCEPTANCE {name}: {'PASS' if passed else 'FAIL'}")


# The standard masked-LM residue vocabulary: four leading special tokens,
# then residues, then the trailing specials. Only the letter positions
# matter to the adapter; it looks tokens up by name.
VOCAB = [
    "<cls>", "<pad>", "<eos>", "<unk>",
    "L", "A", "G", "V", "S", "E", "R", "T", "I", "D", "P", "K",
    "Q", "N", "F", "Y", "M", "H", "W", "C",
    "X", "B", "U", "Z", "O", ".", "-",
    "<null_1>", "<mask>",
]


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory) -> str:
    """A tiny randomly initialized masked LM saved as a local checkpoint.

    Small enough to load in well under a second, real enough to exercise
    the full tokenizer/model/readout path.
    """
    import torch
    from transformers import EsmConfig, EsmForMaskedLM, EsmTokenizer

    path = tmp_path_factory.mktemp("checkpoint")
    (path / "vocab.txt").write_text("\n".join(VOCAB) + "\n")
    tokenizer = EsmTokenizer(vocab_file=str(path / "vocab.txt"))
    torch.manual_seed(7)
    config = EsmConfig(
        vocab_size=len(VOCAB),
        mask_token_id=tokenizer.mask_token_id,
        pad_token_id=tokenizer.pad_token_id,
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=64,
        max_position_embeddings=64,
        position_embedding_type="rotary",
        token_dropout=False,
    )
    model = EsmForMaskedLM(config)
    model.eval()
    tokenizer.save_pretrained(str(path))
    model.save_pretrained(str(path))
    return str(path)
