//! Drives the `hvf` command line in-process on the bundled Grushin plane.

fn main() {
    let file = concat!(env!("CARGO_MANIFEST_DIR"), "/data/grushin1.hvf");
    for args in [
        vec!["analyze", file],
        vec!["lift", file],
        vec!["distance", file, "--from", "0,0", "--to", "1,1"],
        vec!["verify", file, "--suite", "pole", "--seed", "7"],
    ] {
        println!("$ hvf {}", args.join(" "));
        let code = hormander::cli::run(std::iter::once("hvf").chain(args.iter().copied()));
        println!("exit code {code}\n");
    }
}
