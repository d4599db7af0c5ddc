use crate::config::Config;
use crate::guesser::Vocab;
use crate::model::Model;

pub fn tiny_model(seed: u64) -> Model {
    let config =
        Config { hidden: 8, encoder_heads: 2, executor_heads: 2, encoder_layers: 1, executor_layers: 1, seed, ..Config::default() };
    let vocab = Vocab::build(
        "def f ( x ) : return x + 1 y = f ( 2 ) while y : y = y - 1 for i in range a b c".split(' '),
        1,
        100,
        8,
    );
    Model::new(&config, vocab)
}
