use std::process::exit;

fn main() {
    exit(dftopk_cli::cli::main_entry());
}
