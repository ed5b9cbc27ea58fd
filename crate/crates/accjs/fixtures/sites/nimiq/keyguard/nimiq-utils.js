/* stand-in for https://keyguard.nimiq.com/lib/nimiq-utils.js */
(function () { self.loaded = (self.loaded || []).concat("https://keyguard.nimiq.com/lib/nimiq-utils.js"); })();
