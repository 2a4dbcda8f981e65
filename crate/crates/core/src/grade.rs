use serde::Serialize;

/// Strength of a verdict. Ordered from strongest to weakest; aggregation
/// keeps the weakest grade that contributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Grade {
    Proven,
    Sampled,
    Unknown,
    Failed,
}

impl Grade {
    pub fn weakest(self, other: Grade) -> Grade {
        self.max(other)
    }

    pub fn combine<I: IntoIterator<Item = Grade>>(grades: I) -> Grade {
        grades.into_iter().fold(Grade::Proven, Grade::weakest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregation_never_upgrades() {
        assert_eq!(Grade::combine([Grade::Proven, Grade::Sampled]), Grade::Sampled);
        assert_eq!(Grade::combine([Grade::Failed, Grade::Proven]), Grade::Failed);
        assert_eq!(Grade::combine([]), Grade::Proven);
        assert_eq!(Grade::Unknown.weakest(Grade::Sampled), Grade::Unknown);
    }
}
