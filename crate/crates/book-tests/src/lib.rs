//! Every chapter of the guide is attached to a module here so that its Rust
//! snippets run as doctests.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(cli, "cli.md");
chapter!(configuration, "configuration.md");
chapter!(geometry, "geometry.md");
chapter!(state_machine, "state-machine.md");
chapter!(rewards, "rewards.md");
chapter!(training, "training.md");
chapter!(evaluation, "evaluation.md");
chapter!(formats, "formats.md");
chapter!(acceptance, "acceptance.md");
