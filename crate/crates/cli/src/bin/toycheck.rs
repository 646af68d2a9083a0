//! Command-line front end of the toy checker.

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(vermin_toy::cli_main(&args));
}
