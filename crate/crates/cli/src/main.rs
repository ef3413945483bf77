//! `illumest` command-line tool: estimate, train, evaluate, correct, synth.

mod args;
mod run;

fn main() {
    std::process::exit(run::run());
}
