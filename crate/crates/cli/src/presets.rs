//! Named configs shipped with the tool.

/// `(name, command it is meant for, config text)`.
pub const PRESETS: &[(&str, &str, &str)] = &[
    ("fig3", "patterns", include_str!("../presets/fig3.toml")),
    ("fig4", "patterns", include_str!("../presets/fig4.toml")),
    ("fig5", "patterns", include_str!("../presets/fig5.toml")),
    ("fig6", "patterns", include_str!("../presets/fig6.toml")),
    ("table1", "patterns", include_str!("../presets/table1.toml")),
    ("fig7-n3", "reconstruct", include_str!("../presets/fig7-n3.toml")),
    ("fig7-n4", "reconstruct", include_str!("../presets/fig7-n4.toml")),
    ("fig8-n5", "reconstruct", include_str!("../presets/fig8-n5.toml")),
    ("fig8-n6", "reconstruct", include_str!("../presets/fig8-n6.toml")),
    ("fig9", "scan", include_str!("../presets/fig9.toml")),
    ("fig13", "snr", include_str!("../presets/fig13.toml")),
    ("fig14", "snr", include_str!("../presets/fig14.toml")),
];

/// Short names that stand for one of the presets above.
const ALIASES: &[(&str, &str)] = &[("fig7", "fig7-n4"), ("fig8", "fig8-n5")];

pub fn lookup(name: &str) -> Option<(&'static str, &'static str)> {
    let name = ALIASES.iter().find(|(a, _)| *a == name).map_or(name, |(_, t)| *t);
    PRESETS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|(n, _, text)| (*n, *text))
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _, _)| *n).collect()
}
