//! Named parameter trees.
//!
//! Parameter groups are plain structs generic over the leaf type so the same
//! layout holds initial tensors, tape variables during a forward pass, Adam
//! moments, and gradients. `visit` walks leaves in declaration order, which
//! is also the checkpoint order.

/// Declares a parameter struct with `map` and `visit` over its leaves.
macro_rules! param_group {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name<T> {
            $($(#[$fmeta])* pub $field: T,)*
        }

        impl<T> $name<T> {
            pub fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> $name<U> {
                $name { $($field: f(&self.$field),)* }
            }

            pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
                $(f(format!("{prefix}{}", stringify!($field)), &self.$field);)*
            }
        }
    };
}

pub(crate) use param_group;
